#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "beamkit/features.hpp"
#include "beamkit/neural/model.hpp"
#include "beamkit/room_sim.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit::nn {

struct TrainConfig {
  std::uint64_t seed = 1;
  int steps = 200;
  double learning_rate = 2e-3;
  double lr_decay = 0.98;  // applied once per pass over the examples
  double grad_clip = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int smoothing = 20;  // trailing window of the smoothed loss

  void validate() const;
};

/// One training utterance: mixture STFT, its features and the reverberant
/// target at the reference mic as both waveform and spectrum.
struct TrainingExample {
  std::string id;
  Spectrogram mixture;
  FeatureStack features;
  Tensor ref_wave;  // [L]
  Tensor ref_spec;  // [T, F, 2]
  std::vector<double> mixture_ref;  // unprocessed mixture at the reference mic
  std::size_t length = 0;
};

/// Builds an example from a scene. `max_samples` > 0 keeps only the leading
/// samples.
TrainingExample make_example(const MixtureScene& scene, const StftConfig& stft, std::string id,
                             std::size_t max_samples = 0);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  std::string example;
  double loss = 0.0;
  double si_sdr_db = 0.0;
  double mse = 0.0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainResult {
  std::vector<StepRecord> trace;
};

/// Adam with per-epoch learning-rate decay and global-norm gradient
/// clipping. Examples are visited in a seeded shuffle each epoch. Throws
/// NumericError naming the step if anything turns non-finite.
TrainResult train(NeuralExtractor& model, std::span<const TrainingExample> examples,
                  const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step = {});

/// Trailing moving average of the loss column.
std::vector<double> smoothed_loss(const std::vector<StepRecord>& trace, int window);

void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<StepRecord>& trace);

/// SI-SDR in dB of the model output against the example's reference.
double output_si_sdr(const NeuralExtractor& model, const TrainingExample& example);
/// SI-SDR in dB of the unprocessed reference-mic mixture.
double mixture_si_sdr(const TrainingExample& example);

}  // namespace beamkit::nn
