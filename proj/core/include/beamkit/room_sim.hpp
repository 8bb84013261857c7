#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "beamkit/signal_io.hpp"

namespace beamkit {

using Vec3 = Eigen::Vector3d;
using MicPair = std::pair<int, int>;

inline constexpr double kSpeedOfSound = 343.0;

struct ArrayGeometry {
  std::vector<Vec3> mic_positions;
  std::vector<MicPair> pairs;
  int reference_mic = 0;

  int num_mics() const { return static_cast<int>(mic_positions.size()); }
  Vec3 centroid() const;

  /// Throws InvalidArgument unless there are >= 2 mics, every pair holds two
  /// distinct in-range indices and the reference mic is in range.
  void validate() const;

  /// `count` mics along +x with the given spacing, centred on `center`.
  /// Pairs default to (0,1), (0,2), ... (0,count-1).
  static ArrayGeometry uniform_linear(int count, double spacing, const Vec3& center);
};

/// Unit vector from mic 0 toward the last mic. Throws InvalidArgument if the
/// mics are not colinear (tolerance 1e-6 m).
Vec3 array_axis(const ArrayGeometry& array);

/// Signed coordinate of every mic along `array_axis`, relative to the
/// reference mic.
std::vector<double> axial_coordinates(const ArrayGeometry& array);

/// Angle in degrees in [0, 180] between the source direction (seen from the
/// array centroid) and the end-fire direction beyond mic 0. A source on the
/// axis on mic 0's side is at 0 degrees, broadside is 90 degrees.
double doa_of(const Vec3& source, const ArrayGeometry& array);

enum class DelayInterpolation { kNearestSample, kWindowedSinc };

struct RoomConfig {
  Vec3 dimensions{6.0, 5.0, 3.0};
  double rt60 = 0.3;
  /// Negative selects the order automatically from rt60 (capped at 30).
  int max_image_order = -1;
  double speed_of_sound = kSpeedOfSound;
  int sample_rate = 16000;
  DelayInterpolation interpolation = DelayInterpolation::kNearestSample;
};

/// Uniform wall absorption coefficient reproducing `room.rt60` by Sabine's
/// formula. Throws InvalidArgument if the coefficient would exceed 1.
double sabine_absorption(const RoomConfig& room);

/// Image order actually used by `simulate_rir`.
int effective_image_order(const RoomConfig& room);

struct ImpulseResponseSet {
  Eigen::MatrixXd rir;  // mics x taps
  int sample_rate = 16000;
};

/// Shoebox image-source simulation. Each image contributes
/// beta^reflections / (4 pi r) at delay r / c.
ImpulseResponseSet simulate_rir(const RoomConfig& room, const Vec3& source,
                                const ArrayGeometry& array);

struct MixtureScene {
  MultichannelWave mixture;                   // y
  MultichannelWave target_reverberant;        // x'
  MultichannelWave interference_reverberant;  // n'
  MultichannelWave noise;                     // s
  double target_doa = 0.0;
  double interference_doa = 0.0;
  double sir_db = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;

  RoomConfig room;
  ArrayGeometry array;
  Vec3 target_position = Vec3::Zero();
  Vec3 interference_position = Vec3::Zero();
};

/// Convolves the dry sources with their RIRs, scales the interference to
/// `sir_db` and the noise to `snr_db` (both relative to the reverberant
/// target at the reference mic) and sums the components. The output length
/// equals the dry target length.
MixtureScene mix_scene(const Eigen::VectorXd& target_dry, const Eigen::VectorXd& interf_dry,
                       const ImpulseResponseSet& rir_target,
                       const ImpulseResponseSet& rir_interf, const MultichannelWave& noise,
                       double sir_db, double snr_db, int reference_mic = 0);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Spatial character of the background noise: spherically isotropic
/// (coherence sinc(2 pi f d / c) between mics) or independent per mic.
enum class NoiseField { kDiffuse, kIndependent };

struct SimulationConfig {
  Vec3 room_min{3.0, 3.0, 1.5};
  Vec3 room_max{8.0, 8.0, 2.5};
  Range rt60{0.1, 0.6};
  Range sir_db{-6.0, 6.0};
  Range snr_db{-5.0, 20.0};
  Range source_distance{0.5, 2.5};
  double min_separation_deg = 5.0;
  double wall_margin = 0.4;
  double clip_seconds = 4.0;
  int sample_rate = 16000;
  int mic_count = 4;
  double mic_spacing = 0.03;
  std::vector<MicPair> pairs{{0, 1}, {0, 2}, {0, 3}};
  int max_placement_retries = 200;
  DelayInterpolation interpolation = DelayInterpolation::kNearestSample;
  NoiseField noise_field = NoiseField::kIndependent;
  /// Optional directories of mono WAV files. When empty, synthetic
  /// speech-like sources and pink noise are generated.
  std::optional<std::filesystem::path> speech_dir;
  std::optional<std::filesystem::path> noise_dir;

  std::size_t clip_samples() const {
    return static_cast<std::size_t>(clip_seconds * sample_rate + 0.5);
  }
  void validate() const;
};

/// Scene parameters drawn from a seed before any audio is rendered.
struct ScenePlan {
  std::uint64_t seed = 0;
  RoomConfig room;
  ArrayGeometry array;
  Vec3 target_position = Vec3::Zero();
  Vec3 interference_position = Vec3::Zero();
  double target_doa = 0.0;
  double interference_doa = 0.0;
  double sir_db = 0.0;
  double snr_db = 0.0;
  std::uint64_t target_source_seed = 0;
  std::uint64_t interference_source_seed = 0;
  std::uint64_t noise_seed = 0;
};

/// Deterministic draw of room, rt60, placement and levels. Throws Error if no
/// placement honouring the minimum separation is found within the retry
/// budget.
ScenePlan plan_scene(std::uint64_t seed, const SimulationConfig& cfg);

/// Renders a plan into audio.
MixtureScene render_scene(const ScenePlan& plan, const SimulationConfig& cfg);

/// plan_scene followed by render_scene.
MixtureScene generate_scene(std::uint64_t seed, const SimulationConfig& cfg);

}  // namespace beamkit
