#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "beamkit/beamform.hpp"
#include "beamkit/error.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/neural/model.hpp"
#include "beamkit/neural/train.hpp"
#include "beamkit/room_sim.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit {

enum class SteeringMode { kDoa, kPca };

const char* to_string(SteeringMode mode);
SteeringMode parse_steering(const std::string& text);

/// Validation failure carrying every violated field.
class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct BeamPatternSettings {
  double angle_step_deg = 1.0;
  int segments = 4;
  double min_hz = 200.0;
  double max_hz = 7000.0;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  StftConfig stft;
  SimulationConfig simulation;
  nn::MaskKind mask = nn::MaskKind::kIrm;  // oracle extraction mask
  SteeringMode steering = SteeringMode::kDoa;
  double loading = kDefaultLoading;
  nn::ExtractorConfig model;
  nn::TrainConfig train;
  int train_scenes = 10;            // generated when no scenes are given
  double train_clip_seconds = 1.0;  // length of each training utterance
  BeamPatternSettings beampattern;

  /// Every violated field, empty when valid.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems.
  void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const std::filesystem::path& path, const PipelineConfig& cfg);
std::string pipeline_config_json(const PipelineConfig& cfg);
PipelineConfig parse_pipeline_config(const std::string& json_text);

/// Applies "dotted.key=value". The value is parsed as JSON when possible and
/// taken as a string otherwise. Unknown keys are rejected.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// Files and directories created by a subcommand. Unless committed they are
/// removed (newest first) on destruction.
class OutputTracker {
 public:
  OutputTracker() = default;
  OutputTracker(const OutputTracker&) = delete;
  OutputTracker& operator=(const OutputTracker&) = delete;
  ~OutputTracker();

  /// Creates `dir` (and missing parents), recording what did not exist.
  void make_dirs(const std::filesystem::path& dir);
  /// Records a file about to be written.
  void add_file(const std::filesystem::path& file);
  void commit() { committed_ = true; }
  void rollback();
  /// Files recorded so far, in creation order.
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::vector<std::filesystem::path> created_;
  std::vector<std::filesystem::path> files_;
  bool committed_ = false;
};

/// Oracle-mask MVDR weights for a scene: masks from the known components,
/// utterance covariances, DOA or PCA steering.
BeamWeights oracle_mvdr_weights(const MixtureScene& scene, const Spectrogram& mixture,
                                const PipelineConfig& cfg);
/// Single-channel estimate of the reverberant target at the reference mic.
MultichannelWave oracle_extract(const MixtureScene& scene, const PipelineConfig& cfg);

struct TrainOutcome {
  nn::NeuralExtractor model;
  nn::TrainResult result;
  std::vector<nn::TrainingExample> examples;
  double initial_smoothed_loss = 0.0;
  double final_smoothed_loss = 0.0;
  double mixture_si_sdr = 0.0;  // mean over examples
  double output_si_sdr = 0.0;   // mean over examples, trained model
};

/// Seeds of the scenes `simulate` and `train` generate: seed, seed + 1, ...
std::uint64_t scene_seed(std::uint64_t seed, int index);

/// Trains on the given scenes, each cut to `train_clip_seconds`.
TrainOutcome train_on_scenes(const PipelineConfig& cfg, const std::vector<MixtureScene>& scenes);

/// Subcommands. Each returns the artifacts it wrote.
std::vector<std::filesystem::path> run_simulate(const PipelineConfig& cfg, int count,
                                                const std::filesystem::path& out,
                                                OutputTracker& tracker);
/// `with_features` also writes each scene's input feature stack as a tensor
/// dump next to the estimate.
std::vector<std::filesystem::path> run_oracle_extract(const PipelineConfig& cfg,
                                                      const std::vector<std::filesystem::path>& scenes,
                                                      const std::filesystem::path& out,
                                                      OutputTracker& tracker,
                                                      bool with_features = false);
std::vector<std::filesystem::path> run_train(const PipelineConfig& cfg,
                                             const std::vector<std::filesystem::path>& scenes,
                                             const std::filesystem::path& out,
                                             OutputTracker& tracker);
std::vector<std::filesystem::path> run_infer(const PipelineConfig& cfg,
                                             const std::filesystem::path& checkpoint,
                                             const std::vector<std::filesystem::path>& scenes,
                                             const std::filesystem::path& out,
                                             OutputTracker& tracker,
                                             bool with_features = false);

enum class EvaluationInput { kEstimate, kMixture };

/// Scores extraction outputs (kEstimate: paths name extraction directories
/// or manifests) or raw mixtures (kMixture: paths name scenes) against the
/// reverberant target at the reference mic.
MetricReport evaluate_inputs(const std::vector<std::filesystem::path>& inputs, EvaluationInput kind);
std::vector<std::filesystem::path> run_evaluate(const PipelineConfig& cfg,
                                                const std::vector<std::filesystem::path>& inputs,
                                                EvaluationInput kind,
                                                const std::filesystem::path& out,
                                                OutputTracker& tracker);

/// Beam pattern of the oracle MVDR weights, or of a trained model's
/// frame-level weights averaged over segments when `checkpoint` is given.
std::vector<std::filesystem::path> run_beampattern(const PipelineConfig& cfg,
                                                   const std::filesystem::path& scene,
                                                   const std::optional<std::filesystem::path>& checkpoint,
                                                   const std::filesystem::path& out,
                                                   OutputTracker& tracker);

inline constexpr const char* kExtractionManifestName = "extraction.json";
inline constexpr const char* kFeatureDumpName = "features.bin";

}  // namespace beamkit
