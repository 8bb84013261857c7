#include "beamkit/neural/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "beamkit/error.hpp"
#include "config_json.hpp"

namespace beamkit::nn {

namespace {

constexpr char kMagic[8] = {'B', 'K', 'C', 'K', 'P', 'T', '\0', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return v;
}

const char* init_kind(ParamInit::Kind k) {
  switch (k) {
    case ParamInit::Kind::kUniformFanIn: return "uniform_fan_in";
    case ParamInit::Kind::kConstant: return "constant";
    case ParamInit::Kind::kCustom: return "custom";
  }
  return "custom";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NeuralExtractor& model,
                     const StftConfig& stft) {
  nlohmann::json init = nlohmann::json::array();
  for (const auto& e : model.params().entries()) {
    nlohmann::json j = {{"name", e.name}, {"kind", init_kind(e.init.kind)}, {"value", e.init.value}};
    if (!e.init.note.empty()) j["note"] = e.init.note;
    init.push_back(j);
  }
  const nlohmann::json meta = {{"format", "beamkit-checkpoint"},
                               {"model", model.config()},
                               {"stft", stft},
                               {"seed", model.params().seed()},
                               {"init", init}};
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& entries = model.params().entries();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) put<std::int32_t>(out, d);
    const auto v = e.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a beamkit checkpoint: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " +
                  path.string());
  }
  const auto meta_len = get<std::uint32_t>(in, path);
  std::string text(meta_len, '\0');
  in.read(text.data(), meta_len);
  if (!in) throw IoError("truncated checkpoint " + path.string());

  Checkpoint ck;
  try {
    const auto meta = nlohmann::json::parse(text);
    meta.at("model").get_to(ck.config);
    meta.at("stft").get_to(ck.stft);
    ck.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint metadata in " + path.string() + ": " + e.what());
  }

  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint32_t>(in, path);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw IoError("implausible tensor rank in " + path.string());
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = get<std::int32_t>(in, path);
      if (dim < 0) throw IoError("negative dimension in " + path.string());
      t.shape.push_back(dim);
    }
    t.values.resize(numel(t.shape));
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint " + path.string());
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void load_parameters(const Checkpoint& checkpoint, ParamStore& store) {
  if (checkpoint.tensors.size() != store.size()) {
    throw InvalidArgument("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                          " tensors, model expects " + std::to_string(store.size()));
  }
  for (const auto& t : checkpoint.tensors) {
    if (!store.contains(t.name)) throw InvalidArgument("checkpoint tensor '" + t.name + "' unknown to model");
    Tensor dst = store.get(t.name);
    if (dst.shape() != t.shape) {
      throw InvalidArgument("checkpoint tensor '" + t.name + "' has shape " + shape_string(t.shape) +
                            ", model expects " + shape_string(dst.shape()));
    }
    auto v = dst.mutable_values();
    std::copy(t.values.begin(), t.values.end(), v.begin());
  }
}

NeuralExtractor restore_model(const Checkpoint& checkpoint) {
  NeuralExtractor model(checkpoint.config, checkpoint.seed);
  load_parameters(checkpoint, model.params());
  return model;
}

}  // namespace beamkit::nn
