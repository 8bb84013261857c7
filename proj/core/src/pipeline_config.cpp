#include <fstream>
#include <sstream>

#include <json.hpp>

#include "beamkit/pipeline.hpp"
#include "config_json.hpp"

namespace beamkit {

using nlohmann::json;

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("ranges are written as [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("vectors are written as [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json simulation_json(const SimulationConfig& s) {
  json pairs = json::array();
  for (const auto& [a, b] : s.pairs) pairs.push_back(json::array({a, b}));
  return {{"room_min", vec_json(s.room_min)},
          {"room_max", vec_json(s.room_max)},
          {"rt60", range_json(s.rt60)},
          {"sir_db", range_json(s.sir_db)},
          {"snr_db", range_json(s.snr_db)},
          {"source_distance", range_json(s.source_distance)},
          {"min_separation_deg", s.min_separation_deg},
          {"wall_margin", s.wall_margin},
          {"clip_seconds", s.clip_seconds},
          {"sample_rate", s.sample_rate},
          {"mic_count", s.mic_count},
          {"mic_spacing", s.mic_spacing},
          {"pairs", pairs},
          {"max_placement_retries", s.max_placement_retries},
          {"interpolation",
           s.interpolation == DelayInterpolation::kNearestSample ? "nearest" : "sinc"},
          {"noise_field", s.noise_field == NoiseField::kDiffuse ? "diffuse" : "independent"},
          {"speech_dir", s.speech_dir ? json(s.speech_dir->string()) : json(nullptr)},
          {"noise_dir", s.noise_dir ? json(s.noise_dir->string()) : json(nullptr)}};
}

void simulation_from(const json& j, SimulationConfig& s) {
  if (j.contains("room_min")) s.room_min = vec_from(j.at("room_min"));
  if (j.contains("room_max")) s.room_max = vec_from(j.at("room_max"));
  if (j.contains("rt60")) s.rt60 = range_from(j.at("rt60"));
  if (j.contains("sir_db")) s.sir_db = range_from(j.at("sir_db"));
  if (j.contains("snr_db")) s.snr_db = range_from(j.at("snr_db"));
  if (j.contains("source_distance")) s.source_distance = range_from(j.at("source_distance"));
  s.min_separation_deg = j.value("min_separation_deg", s.min_separation_deg);
  s.wall_margin = j.value("wall_margin", s.wall_margin);
  s.clip_seconds = j.value("clip_seconds", s.clip_seconds);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.mic_count = j.value("mic_count", s.mic_count);
  s.mic_spacing = j.value("mic_spacing", s.mic_spacing);
  if (j.contains("pairs")) {
    s.pairs.clear();
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) throw InvalidArgument("pairs are written as [i, j]");
      s.pairs.push_back({p[0].get<int>(), p[1].get<int>()});
    }
  }
  s.max_placement_retries = j.value("max_placement_retries", s.max_placement_retries);
  if (j.contains("interpolation")) {
    const auto v = j.at("interpolation").get<std::string>();
    if (v == "nearest") {
      s.interpolation = DelayInterpolation::kNearestSample;
    } else if (v == "sinc") {
      s.interpolation = DelayInterpolation::kWindowedSinc;
    } else {
      throw InvalidArgument("simulation.interpolation must be 'nearest' or 'sinc'");
    }
  }
  if (j.contains("noise_field")) {
    const auto v = j.at("noise_field").get<std::string>();
    if (v == "diffuse") {
      s.noise_field = NoiseField::kDiffuse;
    } else if (v == "independent") {
      s.noise_field = NoiseField::kIndependent;
    } else {
      throw InvalidArgument("simulation.noise_field must be 'diffuse' or 'independent'");
    }
  }
  for (const char* key : {"speech_dir", "noise_dir"}) {
    if (!j.contains(key)) continue;
    auto& dst = std::string(key) == "speech_dir" ? s.speech_dir : s.noise_dir;
    if (j.at(key).is_null()) {
      dst.reset();
    } else {
      dst = std::filesystem::path(j.at(key).get<std::string>());
    }
  }
}

json to_json_doc(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"stft", c.stft},
          {"simulation", simulation_json(c.simulation)},
          {"mask", nn::to_string(c.mask)},
          {"steering", to_string(c.steering)},
          {"loading", c.loading},
          {"model", c.model},
          {"train", c.train},
          {"train_scenes", c.train_scenes},
          {"train_clip_seconds", c.train_clip_seconds},
          {"beampattern",
           {{"angle_step_deg", c.beampattern.angle_step_deg},
            {"segments", c.beampattern.segments},
            {"min_hz", c.beampattern.min_hz},
            {"max_hz", c.beampattern.max_hz}}}};
}

PipelineConfig from_json_doc(const json& j) {
  PipelineConfig c;
  if (!j.is_object()) throw InvalidArgument("pipeline config must be a JSON object");
  static const char* known[] = {"seed",  "stft",         "simulation",         "mask",
                                "steering", "loading",  "model",              "train",
                                "train_scenes", "train_clip_seconds", "beampattern"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw InvalidArgument("unknown config key '" + key + "'");
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("stft")) j.at("stft").get_to(c.stft);
  if (j.contains("simulation")) simulation_from(j.at("simulation"), c.simulation);
  if (j.contains("mask")) c.mask = nn::parse_mask_kind(j.at("mask").get<std::string>());
  if (j.contains("steering")) c.steering = parse_steering(j.at("steering").get<std::string>());
  c.loading = j.value("loading", c.loading);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  c.train_scenes = j.value("train_scenes", c.train_scenes);
  c.train_clip_seconds = j.value("train_clip_seconds", c.train_clip_seconds);
  if (j.contains("beampattern")) {
    const auto& b = j.at("beampattern");
    c.beampattern.angle_step_deg = b.value("angle_step_deg", c.beampattern.angle_step_deg);
    c.beampattern.segments = b.value("segments", c.beampattern.segments);
    c.beampattern.min_hz = b.value("min_hz", c.beampattern.min_hz);
    c.beampattern.max_hz = b.value("max_hz", c.beampattern.max_hz);
  }
  return c;
}

template <typename F>
void collect(std::vector<std::string>& problems, const std::string& field, F&& check) {
  try {
    check();
  } catch (const std::exception& e) {
    problems.push_back(field + ": " + e.what());
  }
}

}  // namespace

const char* to_string(SteeringMode mode) { return mode == SteeringMode::kDoa ? "doa" : "pca"; }

SteeringMode parse_steering(const std::string& text) {
  if (text == "doa") return SteeringMode::kDoa;
  if (text == "pca") return SteeringMode::kPca;
  throw InvalidArgument("steering must be 'doa' or 'pca', got '" + text + "'");
}

namespace {
std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration (" + std::to_string(problems.size()) + " problem" +
                    (problems.size() == 1 ? "" : "s") + ")";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : InvalidArgument(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> PipelineConfig::problems() const {
  std::vector<std::string> out;
  collect(out, "stft", [&] { stft.validate(); });
  collect(out, "simulation", [&] { simulation.validate(); });
  collect(out, "model.preseparator", [&] { model.pre.validate(); });
  collect(out, "model.beamformer", [&] { model.net.validate(); });
  collect(out, "train", [&] { train.validate(); });
  if (!(loading >= 0.0)) out.push_back("loading: must be >= 0");
  if (train_scenes < 1) out.push_back("train_scenes: must be >= 1");
  if (!(train_clip_seconds > 0.0)) out.push_back("train_clip_seconds: must be positive");
  if (model.pre.bins != stft.num_bins()) {
    out.push_back("model.preseparator.bins: " + std::to_string(model.pre.bins) +
                  " does not match the STFT's " + std::to_string(stft.num_bins()) + " bins");
  }
  if (model.net.mics != simulation.mic_count) {
    out.push_back("model.beamformer.mics: " + std::to_string(model.net.mics) +
                  " does not match simulation.mic_count " + std::to_string(simulation.mic_count));
  }
  if (model.net.pairs != static_cast<int>(simulation.pairs.size())) {
    out.push_back("model.beamformer.pairs: " + std::to_string(model.net.pairs) +
                  " does not match the " + std::to_string(simulation.pairs.size()) +
                  " configured mic pairs");
  }
  if (!model.pre.unet_channels.empty() && model.pre.unet_channels.front() != model.net.pairs + 2) {
    out.push_back("model.preseparator.unet_channels[0]: must equal pairs + 2 = " +
                  std::to_string(model.net.pairs + 2) + " feature planes");
  }
  if (!(beampattern.angle_step_deg > 0.0 && beampattern.angle_step_deg <= 180.0)) {
    out.push_back("beampattern.angle_step_deg: must be in (0, 180]");
  }
  if (beampattern.segments < 1) out.push_back("beampattern.segments: must be >= 1");
  if (!(beampattern.min_hz >= 0.0 && beampattern.max_hz > beampattern.min_hz)) {
    out.push_back("beampattern: need 0 <= min_hz < max_hz");
  }
  if (simulation.sample_rate > 0 && beampattern.max_hz > simulation.sample_rate / 2.0) {
    out.push_back("beampattern.max_hz: above the Nyquist frequency");
  }
  return out;
}

void PipelineConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

std::string pipeline_config_json(const PipelineConfig& cfg) { return to_json_doc(cfg).dump(2); }

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  try {
    return from_json_doc(json::parse(json_text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_pipeline_config(ss.str());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void save_pipeline_config(const std::filesystem::path& path, const PipelineConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << pipeline_config_json(cfg) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::string pointer;
  std::stringstream parts(key);
  for (std::string part; std::getline(parts, part, '.');) {
    if (part.empty()) throw InvalidArgument("override key '" + key + "' has an empty component");
    pointer += "/" + part;
  }
  json doc = to_json_doc(cfg);
  const json::json_pointer ptr(pointer);
  if (!doc.contains(ptr)) throw InvalidArgument("unknown config key '" + key + "'");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  doc[ptr] = value;
  try {
    cfg = from_json_doc(doc);
  } catch (const json::exception& e) {
    throw InvalidArgument("override '" + assignment + "': " + e.what());
  }
}

}  // namespace beamkit
