#include "beamkit/scene_io.hpp"

#include <fstream>

#include <json.hpp>

#include "beamkit/error.hpp"

namespace beamkit {

using nlohmann::json;

namespace {

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

SceneManifest manifest_of(const MixtureScene& scene) {
  SceneManifest m;
  m.seed = scene.seed;
  m.sample_rate = scene.mixture.sample_rate;
  m.room = scene.room;
  m.array = scene.array;
  m.target_position = scene.target_position;
  m.interference_position = scene.interference_position;
  m.target_doa = scene.target_doa;
  m.interference_doa = scene.interference_doa;
  m.sir_db = scene.sir_db;
  m.snr_db = scene.snr_db;
  return m;
}

void write_manifest(const std::filesystem::path& path, const SceneManifest& m) {
  json mics = json::array();
  for (const auto& p : m.array.mic_positions) mics.push_back(to_json(p));
  json pairs = json::array();
  for (const auto& [i, j] : m.array.pairs) pairs.push_back(json::array({i, j}));
  json doc = {
      {"format", "beamkit-scene"},
      {"version", 1},
      {"seed", m.seed},
      {"sample_rate", m.sample_rate},
      {"room",
       {{"dimensions", to_json(m.room.dimensions)},
        {"rt60", m.room.rt60},
        {"max_image_order", m.room.max_image_order},
        {"speed_of_sound", m.room.speed_of_sound},
        {"interpolation", m.room.interpolation == DelayInterpolation::kNearestSample
                              ? "nearest"
                              : "sinc"}}},
      {"array",
       {{"mic_positions", mics}, {"pairs", pairs}, {"reference_mic", m.array.reference_mic}}},
      {"target", {{"position", to_json(m.target_position)}, {"doa_deg", m.target_doa}}},
      {"interference",
       {{"position", to_json(m.interference_position)}, {"doa_deg", m.interference_doa}}},
      {"sir_db", m.sir_db},
      {"snr_db", m.snr_db},
      {"files",
       {{"mixture", m.mixture_file},
        {"target", m.target_file},
        {"interference", m.interference_file},
        {"noise", m.noise_file}}},
  };
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

SceneManifest read_manifest(const std::filesystem::path& dir_or_manifest) {
  const auto path = manifest_path(dir_or_manifest);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  SceneManifest m;
  try {
    const json doc = json::parse(in);
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.sample_rate = doc.at("sample_rate").get<int>();
    const auto& room = doc.at("room");
    m.room.dimensions = vec3_from(room.at("dimensions"));
    m.room.rt60 = room.at("rt60").get<double>();
    m.room.max_image_order = room.value("max_image_order", -1);
    m.room.speed_of_sound = room.value("speed_of_sound", kSpeedOfSound);
    m.room.sample_rate = m.sample_rate;
    m.room.interpolation = room.value("interpolation", std::string("nearest")) == "sinc"
                               ? DelayInterpolation::kWindowedSinc
                               : DelayInterpolation::kNearestSample;
    const auto& array = doc.at("array");
    for (const auto& p : array.at("mic_positions")) m.array.mic_positions.push_back(vec3_from(p));
    for (const auto& p : array.at("pairs")) m.array.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    m.array.reference_mic = array.value("reference_mic", 0);
    m.target_position = vec3_from(doc.at("target").at("position"));
    m.target_doa = doc.at("target").at("doa_deg").get<double>();
    m.interference_position = vec3_from(doc.at("interference").at("position"));
    m.interference_doa = doc.at("interference").at("doa_deg").get<double>();
    m.sir_db = doc.at("sir_db").get<double>();
    m.snr_db = doc.at("snr_db").get<double>();
    const auto& files = doc.at("files");
    m.mixture_file = files.at("mixture").get<std::string>();
    m.target_file = files.at("target").get<std::string>();
    m.interference_file = files.at("interference").get<std::string>();
    m.noise_file = files.at("noise").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.array.validate();
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& dir_or_manifest) {
  if (std::filesystem::is_directory(dir_or_manifest)) return dir_or_manifest / kManifestName;
  return dir_or_manifest;
}

void write_scene(const std::filesystem::path& dir, const MixtureScene& scene) {
  std::filesystem::create_directories(dir);
  const SceneManifest m = manifest_of(scene);
  write_wav(dir / m.mixture_file, scene.mixture, WavEncoding::kFloat32);
  write_wav(dir / m.target_file, scene.target_reverberant, WavEncoding::kFloat32);
  write_wav(dir / m.interference_file, scene.interference_reverberant, WavEncoding::kFloat32);
  write_wav(dir / m.noise_file, scene.noise, WavEncoding::kFloat32);
  write_manifest(dir / kManifestName, m);
}

MixtureScene read_scene(const std::filesystem::path& dir_or_manifest) {
  const auto path = manifest_path(dir_or_manifest);
  const SceneManifest m = read_manifest(path);
  const auto dir = path.parent_path();
  MixtureScene scene;
  scene.mixture = read_wav(dir / m.mixture_file);
  scene.target_reverberant = read_wav(dir / m.target_file);
  scene.interference_reverberant = read_wav(dir / m.interference_file);
  scene.noise = read_wav(dir / m.noise_file);
  for (const auto* w : {&scene.target_reverberant, &scene.interference_reverberant, &scene.noise}) {
    if (w->samples.rows() != scene.mixture.samples.rows() ||
        w->samples.cols() != scene.mixture.samples.cols()) {
      throw IoError("scene components have inconsistent shapes in " + dir.string());
    }
  }
  scene.seed = m.seed;
  scene.room = m.room;
  scene.array = m.array;
  scene.target_position = m.target_position;
  scene.interference_position = m.interference_position;
  scene.target_doa = m.target_doa;
  scene.interference_doa = m.interference_doa;
  scene.sir_db = m.sir_db;
  scene.snr_db = m.snr_db;
  return scene;
}

}  // namespace beamkit
