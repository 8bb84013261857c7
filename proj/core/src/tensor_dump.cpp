#include "beamkit/tensor_dump.hpp"

#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "beamkit/error.hpp"

namespace beamkit {

namespace {
constexpr char kMagic[8] = {'B', 'K', 'T', 'E', 'N', 'S', 'O', 'R'};
}

void write_tensor_dump(const std::filesystem::path& path, const TensorDump& dump) {
  const auto count = std::accumulate(dump.shape.begin(), dump.shape.end(), std::int64_t{1},
                                     std::multiplies<>());
  if (count != static_cast<std::int64_t>(dump.values.size())) {
    throw InvalidArgument("tensor dump shape does not match value count");
  }
  const nlohmann::json header = {{"dtype", "float64"}, {"shape", dump.shape}, {"names", dump.names}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(dump.values.data()),
            static_cast<std::streamsize>(dump.values.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());
}

TensorDump read_tensor_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint32_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a beamkit tensor dump: " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), len);
  TensorDump dump;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("dtype") != "float64") throw IoError("unsupported dtype in " + path.string());
    dump.shape = header.at("shape").get<std::vector<std::int64_t>>();
    dump.names = header.value("names", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed tensor dump header in " + path.string() + ": " + e.what());
  }
  const auto count = std::accumulate(dump.shape.begin(), dump.shape.end(), std::int64_t{1},
                                     std::multiplies<>());
  dump.values.resize(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(dump.values.data()),
          static_cast<std::streamsize>(dump.values.size() * sizeof(double)));
  if (!in) throw IoError("truncated tensor dump " + path.string());
  return dump;
}

TensorDump to_dump(const FeatureStack& features) {
  TensorDump dump;
  dump.shape = {features.num_planes(), features.bins(), features.frames()};
  dump.names = features.names;
  dump.values.reserve(static_cast<std::size_t>(features.num_planes()) * features.bins() *
                      features.frames());
  for (const auto& plane : features.planes)
    for (int f = 0; f < features.bins(); ++f)
      for (int t = 0; t < features.frames(); ++t) dump.values.push_back(plane(f, t));
  return dump;
}

}  // namespace beamkit
