#pragma once

#include <filesystem>
#include <string>

#include "beamkit/room_sim.hpp"

namespace beamkit {

/// Contents of a scene's manifest.json. WAV paths are relative to the
/// manifest's directory.
struct SceneManifest {
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  RoomConfig room;
  ArrayGeometry array;
  Vec3 target_position = Vec3::Zero();
  Vec3 interference_position = Vec3::Zero();
  double target_doa = 0.0;
  double interference_doa = 0.0;
  double sir_db = 0.0;
  double snr_db = 0.0;
  std::string mixture_file = "mixture.wav";
  std::string target_file = "target.wav";
  std::string interference_file = "interference.wav";
  std::string noise_file = "noise.wav";
};

inline constexpr const char* kManifestName = "manifest.json";

SceneManifest manifest_of(const MixtureScene& scene);

void write_manifest(const std::filesystem::path& path, const SceneManifest& manifest);
/// Accepts the manifest file or the directory holding it.
SceneManifest read_manifest(const std::filesystem::path& dir_or_manifest);

/// Writes the four component WAVs (32-bit float) and manifest.json into
/// `dir`, which is created if needed.
void write_scene(const std::filesystem::path& dir, const MixtureScene& scene);

/// Loads a scene from a directory containing manifest.json, or from the
/// manifest path itself.
MixtureScene read_scene(const std::filesystem::path& dir_or_manifest);

/// Resolves `p` to the manifest file it names (directory or file).
std::filesystem::path manifest_path(const std::filesystem::path& dir_or_manifest);

}  // namespace beamkit
