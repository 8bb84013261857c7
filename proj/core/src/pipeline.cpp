#include "beamkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "beamkit/features.hpp"
#include "beamkit/masks_cov.hpp"
#include "beamkit/neural/checkpoint.hpp"
#include "beamkit/scene_io.hpp"
#include "beamkit/tensor_dump.hpp"
#include "config_json.hpp"

namespace beamkit {

namespace fs = std::filesystem;
using nlohmann::json;

OutputTracker::~OutputTracker() {
  if (!committed_) rollback();
}

void OutputTracker::make_dirs(const fs::path& dir) {
  std::vector<fs::path> missing;
  for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path()) {
    missing.push_back(p);
    if (p == p.parent_path()) break;
  }
  fs::create_directories(dir);
  for (auto it = missing.rbegin(); it != missing.rend(); ++it) created_.push_back(*it);
}

void OutputTracker::add_file(const fs::path& file) {
  if (!fs::exists(file)) created_.push_back(file);
  files_.push_back(file);
}

void OutputTracker::rollback() {
  std::error_code ec;
  for (auto it = created_.rbegin(); it != created_.rend(); ++it) {
    if (fs::is_directory(*it, ec)) {
      fs::remove_all(*it, ec);
    } else {
      fs::remove(*it, ec);
    }
  }
  created_.clear();
  files_.clear();
  committed_ = true;
}

namespace {

std::string scene_name(const fs::path& p) {
  const fs::path manifest = manifest_path(p);
  return manifest.parent_path().filename().string();
}

std::vector<double> row_vector(const MultichannelWave& w, int row) {
  std::vector<double> v(static_cast<std::size_t>(w.samples.cols()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w.samples(row, static_cast<Eigen::Index>(i));
  return v;
}

// Keeps written estimates inside the WAV range; SI-SDR and STOI do not see
// the gain.
double limit_peak(MultichannelWave& w) {
  const double peak = w.samples.cwiseAbs().maxCoeff();
  if (peak <= 0.99) return 1.0;
  const double gain = 0.99 / peak;
  w.samples *= gain;
  return gain;
}

CovarianceField utterance_average(const CovarianceField& framewise) {
  CovarianceField out(0, framewise.bins(), framewise.mics(), framewise.kind());
  for (int f = 0; f < framewise.bins(); ++f) {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(framewise.mics(), framewise.mics());
    for (int t = 0; t < framewise.frames(); ++t) acc += framewise.at(t, f);
    acc /= static_cast<double>(framewise.frames());
    out.at(f) = 0.5 * (acc + acc.adjoint());
  }
  return out;
}

void write_extraction(const fs::path& dir, const fs::path& scene, const MultichannelWave& estimate,
                      const json& details, OutputTracker& tracker,
                      std::vector<fs::path>& artifacts) {
  tracker.make_dirs(dir);
  const fs::path wav = dir / "estimate.wav";
  tracker.add_file(wav);
  write_wav(wav, estimate, WavEncoding::kFloat32);
  json doc = details;
  doc["format"] = "beamkit-extraction";
  doc["version"] = 1;
  doc["scene_manifest"] =
      fs::relative(fs::absolute(manifest_path(scene)), fs::absolute(dir)).generic_string();
  doc["estimate"] = "estimate.wav";
  const fs::path manifest = dir / kExtractionManifestName;
  tracker.add_file(manifest);
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest.string());
  artifacts.push_back(wav);
  artifacts.push_back(manifest);
}

void dump_features(const fs::path& dir, const FeatureStack& features, OutputTracker& tracker,
                   std::vector<fs::path>& artifacts) {
  const fs::path file = dir / kFeatureDumpName;
  tracker.add_file(file);
  write_tensor_dump(file, to_dump(features));
  artifacts.push_back(file);
}

void write_json_file(const fs::path& path, const json& doc, OutputTracker& tracker) {
  tracker.add_file(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17) << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<int> pattern_bins(const PipelineConfig& cfg, int bins, int fft_size, int fs_hz) {
  std::vector<int> out;
  const double bin_hz = static_cast<double>(fs_hz) / fft_size;
  for (int k = 0; k < bins; ++k) {
    const double hz = k * bin_hz;
    if (hz >= cfg.beampattern.min_hz && hz <= cfg.beampattern.max_hz) out.push_back(k);
  }
  if (out.empty()) throw InvalidArgument("no STFT bin inside the beam-pattern band");
  return out;
}

std::vector<double> angle_grid(double step) {
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double a = i * step;
    if (a > 180.0 + 1e-9) break;
    grid.push_back(std::min(a, 180.0));
  }
  return grid;
}

}  // namespace

BeamWeights oracle_mvdr_weights(const MixtureScene& scene, const Spectrogram& mixture,
                                const PipelineConfig& cfg) {
  const int ref = scene.array.reference_mic;
  const Spectrogram target = stft(scene.target_reverberant, cfg.stft);
  // Everything that is not the target: reverberant interference plus noise.
  const MultichannelWave residual{scene.mixture.samples - scene.target_reverberant.samples,
                                  scene.mixture.sample_rate};
  const Spectrogram noise = stft(residual, cfg.stft);

  CovarianceField phi_ss, phi_nn;
  if (cfg.mask == nn::MaskKind::kIrm) {
    phi_ss = covariance_utterance(oracle_irm(target, mixture, ref), mixture, CovarianceKind::kSpeech);
    phi_nn = covariance_utterance(oracle_irm(noise, mixture, ref), mixture, CovarianceKind::kNoise);
  } else {
    phi_ss = utterance_average(covariance_framewise(
        apply_mask(oracle_crm(target, mixture, ref), mixture), CovarianceKind::kSpeech));
    phi_nn = utterance_average(covariance_framewise(
        apply_mask(oracle_crm(noise, mixture, ref), mixture), CovarianceKind::kNoise));
  }

  std::vector<Eigen::VectorXcd> steering;
  if (cfg.steering == SteeringMode::kDoa) {
    steering = steering_for_bins(scene.target_doa, mixture.bins(), cfg.stft.fft_size,
                                 mixture.sample_rate(), scene.array);
  } else {
    steering = pca_relative_steering(phi_ss, ref);
  }
  return mvdr_weights(phi_nn, steering, cfg.loading);
}

MultichannelWave oracle_extract(const MixtureScene& scene, const PipelineConfig& cfg) {
  const Spectrogram mixture = stft(scene.mixture, cfg.stft);
  const BeamWeights w = oracle_mvdr_weights(scene, mixture, cfg);
  return istft(apply_beamformer(w, mixture), static_cast<std::size_t>(scene.mixture.samples.cols()));
}

std::uint64_t scene_seed(std::uint64_t seed, int index) {
  return seed + static_cast<std::uint64_t>(index);
}

TrainOutcome train_on_scenes(const PipelineConfig& cfg, const std::vector<MixtureScene>& scenes) {
  cfg.validate();
  if (scenes.empty()) throw InvalidArgument("training needs at least one scene");
  const auto crop = static_cast<std::size_t>(std::lround(cfg.train_clip_seconds * cfg.simulation.sample_rate));
  std::vector<nn::TrainingExample> examples;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::ostringstream id;
    id << "scene_" << std::setw(3) << std::setfill('0') << i;
    examples.push_back(nn::make_example(scenes[i], cfg.stft, id.str(), crop));
  }
  nn::NeuralExtractor model(cfg.model, cfg.train.seed);
  auto result = nn::train(model, examples, cfg.train);
  const auto smooth = nn::smoothed_loss(result.trace, cfg.train.smoothing);

  TrainOutcome outcome{std::move(model), std::move(result), std::move(examples)};
  // Initial value: mean of the first window, the same width as the trailing
  // average at the end.
  const std::size_t w = std::min<std::size_t>(cfg.train.smoothing, outcome.result.trace.size());
  double first = 0.0;
  for (std::size_t i = 0; i < w; ++i) first += outcome.result.trace[i].loss;
  outcome.initial_smoothed_loss = first / static_cast<double>(w);
  outcome.final_smoothed_loss = smooth.back();
  for (const auto& ex : outcome.examples) {
    outcome.mixture_si_sdr += nn::mixture_si_sdr(ex);
    outcome.output_si_sdr += nn::output_si_sdr(outcome.model, ex);
  }
  outcome.mixture_si_sdr /= static_cast<double>(outcome.examples.size());
  outcome.output_si_sdr /= static_cast<double>(outcome.examples.size());
  return outcome;
}

std::vector<fs::path> run_simulate(const PipelineConfig& cfg, int count, const fs::path& out,
                                   OutputTracker& tracker) {
  cfg.validate();
  if (count < 1) throw InvalidArgument("--count must be >= 1");
  tracker.make_dirs(out);
  std::vector<fs::path> artifacts;
  for (int i = 0; i < count; ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(3) << std::setfill('0') << i;
    const fs::path dir = out / name.str();
    const MixtureScene scene = generate_scene(scene_seed(cfg.seed, i), cfg.simulation);
    tracker.make_dirs(dir);
    const SceneManifest m = manifest_of(scene);
    for (const auto& f : {m.mixture_file, m.target_file, m.interference_file, m.noise_file}) {
      tracker.add_file(dir / f);
    }
    tracker.add_file(dir / kManifestName);
    write_scene(dir, scene);
    artifacts.push_back(dir / kManifestName);
  }
  return artifacts;
}

std::vector<fs::path> run_oracle_extract(const PipelineConfig& cfg, const std::vector<fs::path>& scenes,
                                         const fs::path& out, OutputTracker& tracker,
                                         bool with_features) {
  cfg.validate();
  if (scenes.empty()) throw InvalidArgument("oracle-extract needs at least one scene");
  tracker.make_dirs(out);
  std::vector<fs::path> artifacts;
  for (const auto& path : scenes) {
    const MixtureScene scene = read_scene(path);
    MultichannelWave estimate = oracle_extract(scene, cfg);
    const int ref = scene.array.reference_mic;
    const double mix_sdr = si_sdr(row_vector(scene.mixture, ref), row_vector(scene.target_reverberant, ref));
    const double est_sdr = si_sdr(row_vector(estimate, 0), row_vector(scene.target_reverberant, ref));
    const double gain = limit_peak(estimate);
    const json details = {{"method", "oracle-mvdr"},
                          {"mask", nn::to_string(cfg.mask)},
                          {"steering", to_string(cfg.steering)},
                          {"loading", cfg.loading},
                          {"output_gain", gain},
                          {"si_sdr_mixture_db", mix_sdr},
                          {"si_sdr_estimate_db", est_sdr}};
    write_extraction(out / scene_name(path), path, estimate, details, tracker, artifacts);
    if (with_features) {
      const Spectrogram mix = stft(scene.mixture, cfg.stft);
      dump_features(out / scene_name(path), compute_features(mix, scene.array, scene.target_doa), tracker,
                    artifacts);
    }
  }
  return artifacts;
}

std::vector<fs::path> run_train(const PipelineConfig& cfg, const std::vector<fs::path>& scene_paths,
                                const fs::path& out, OutputTracker& tracker) {
  cfg.validate();
  std::vector<MixtureScene> scenes;
  if (scene_paths.empty()) {
    SimulationConfig sim = cfg.simulation;
    sim.clip_seconds = cfg.train_clip_seconds;
    for (int i = 0; i < cfg.train_scenes; ++i) scenes.push_back(generate_scene(scene_seed(cfg.seed, i), sim));
  } else {
    for (const auto& p : scene_paths) scenes.push_back(read_scene(p));
  }
  const TrainOutcome outcome = train_on_scenes(cfg, scenes);

  tracker.make_dirs(out);
  std::vector<fs::path> artifacts;
  const fs::path ckpt = out / "checkpoint.bin";
  tracker.add_file(ckpt);
  nn::save_checkpoint(ckpt, outcome.model, cfg.stft);
  artifacts.push_back(ckpt);

  const fs::path trace = out / "loss_trace.csv";
  tracker.add_file(trace);
  nn::write_loss_trace_csv(trace, outcome.result.trace);
  artifacts.push_back(trace);

  const fs::path config = out / "train_config.json";
  tracker.add_file(config);
  save_pipeline_config(config, cfg);
  artifacts.push_back(config);

  const double decrease = outcome.initial_smoothed_loss - outcome.final_smoothed_loss;
  const json summary = {{"steps", cfg.train.steps},
                        {"examples", outcome.examples.size()},
                        {"initial_smoothed_loss", outcome.initial_smoothed_loss},
                        {"final_smoothed_loss", outcome.final_smoothed_loss},
                        {"relative_decrease", decrease / std::abs(outcome.initial_smoothed_loss)},
                        {"mean_si_sdr_mixture_db", outcome.mixture_si_sdr},
                        {"mean_si_sdr_output_db", outcome.output_si_sdr}};
  const fs::path summary_path = out / "train_summary.json";
  write_json_file(summary_path, summary, tracker);
  artifacts.push_back(summary_path);
  return artifacts;
}

std::vector<fs::path> run_infer(const PipelineConfig& cfg, const fs::path& checkpoint,
                                const std::vector<fs::path>& scenes, const fs::path& out,
                                OutputTracker& tracker, bool with_features) {
  if (scenes.empty()) throw InvalidArgument("infer needs at least one scene");
  const nn::Checkpoint ck = nn::read_checkpoint(checkpoint);
  const nn::NeuralExtractor model = nn::restore_model(ck);
  tracker.make_dirs(out);
  std::vector<fs::path> artifacts;
  for (const auto& path : scenes) {
    const MixtureScene scene = read_scene(path);
    const Spectrogram mix = stft(scene.mixture, ck.stft);
    const FeatureStack features = compute_features(mix, scene.array, scene.target_doa);
    const auto length = static_cast<std::size_t>(scene.mixture.samples.cols());
    std::vector<double> wave;
    {
      nn::NoGradGuard guard;
      const auto result = model.forward(mix, features, length);
      wave.assign(result.waveform.values().begin(), result.waveform.values().end());
    }
    MultichannelWave estimate{Eigen::Map<const Eigen::RowVectorXd>(wave.data(), static_cast<Eigen::Index>(wave.size())),
                              scene.mixture.sample_rate};
    const double gain = limit_peak(estimate);
    const json details = {{"method", "neural"},
                          {"checkpoint", fs::absolute(checkpoint).generic_string()},
                          {"output_gain", gain}};
    write_extraction(out / scene_name(path), path, estimate, details, tracker, artifacts);
    if (with_features) dump_features(out / scene_name(path), features, tracker, artifacts);
  }
  (void)cfg;
  return artifacts;
}

MetricReport evaluate_inputs(const std::vector<fs::path>& inputs, EvaluationInput kind) {
  if (inputs.empty()) throw InvalidArgument("evaluate needs at least one input");
  MetricReport report;
  for (const auto& input : inputs) {
    UtteranceMetrics m;
    std::vector<double> estimate, reference;
    int fs_hz = 0;
    if (kind == EvaluationInput::kMixture) {
      const MixtureScene scene = read_scene(input);
      const int ref = scene.array.reference_mic;
      estimate = row_vector(scene.mixture, ref);
      reference = row_vector(scene.target_reverberant, ref);
      fs_hz = scene.mixture.sample_rate;
      m.id = scene_name(input);
    } else {
      const fs::path manifest =
          fs::is_directory(input) ? input / kExtractionManifestName : input;
      std::ifstream in(manifest);
      if (!in) throw IoError("no extraction manifest at " + manifest.string());
      json doc;
      try {
        doc = json::parse(in);
        if (doc.at("format") != "beamkit-extraction") throw IoError("not an extraction manifest");
      } catch (const json::exception& e) {
        throw IoError("malformed extraction manifest " + manifest.string() + ": " + e.what());
      }
      const fs::path base = manifest.parent_path();
      const MixtureScene scene = read_scene(base / doc.at("scene_manifest").get<std::string>());
      const MultichannelWave est = read_wav(base / doc.at("estimate").get<std::string>());
      const int ref = scene.array.reference_mic;
      estimate = row_vector(est, 0);
      reference = row_vector(scene.target_reverberant, ref);
      fs_hz = scene.mixture.sample_rate;
      if (estimate.size() != reference.size()) {
        throw InvalidArgument("estimate length differs from the scene in " + manifest.string());
      }
      m.id = base.filename().string();
    }
    m.si_sdr_db = si_sdr(estimate, reference);
    m.stoi = stoi(estimate, reference, fs_hz);
    report.utterances.push_back(m);
  }
  return report;
}

std::vector<fs::path> run_evaluate(const PipelineConfig& cfg, const std::vector<fs::path>& inputs,
                                   EvaluationInput kind, const fs::path& out, OutputTracker& tracker) {
  (void)cfg;
  const MetricReport report = evaluate_inputs(inputs, kind);
  tracker.make_dirs(out);
  const fs::path csv = out / "metrics.csv";
  const fs::path js = out / "metrics.json";
  tracker.add_file(csv);
  report.write_csv(csv);
  tracker.add_file(js);
  report.write_json(js);
  return {csv, js};
}

std::vector<fs::path> run_beampattern(const PipelineConfig& cfg, const fs::path& scene_path,
                                      const std::optional<fs::path>& checkpoint, const fs::path& out,
                                      OutputTracker& tracker) {
  cfg.validate();
  const MixtureScene scene = read_scene(scene_path);
  const auto grid = angle_grid(cfg.beampattern.angle_step_deg);
  BeamPattern pattern;
  StftConfig stft_cfg = cfg.stft;
  BeamWeights weights;
  Spectrogram mix;
  if (checkpoint) {
    const nn::Checkpoint ck = nn::read_checkpoint(*checkpoint);
    const nn::NeuralExtractor model = nn::restore_model(ck);
    stft_cfg = ck.stft;
    mix = stft(scene.mixture, stft_cfg);
    const FeatureStack features = compute_features(mix, scene.array, scene.target_doa);
    nn::NoGradGuard guard;
    const auto result = model.forward(mix, features, static_cast<std::size_t>(scene.mixture.samples.cols()));
    weights = nn::to_beam_weights(result.weights, scene.array.num_mics());
  } else {
    mix = stft(scene.mixture, stft_cfg);
    weights = oracle_mvdr_weights(scene, mix, cfg);
  }
  const auto bins = pattern_bins(cfg, weights.bins(), stft_cfg.fft_size, scene.mixture.sample_rate);
  const double bin_hz = static_cast<double>(scene.mixture.sample_rate) / stft_cfg.fft_size;
  pattern = beam_pattern(weights, scene.array, grid, bins, bin_hz);
  if (pattern.gains.rows() > 1) {
    pattern = segment_average(pattern, std::min<int>(cfg.beampattern.segments,
                                                     static_cast<int>(pattern.gains.rows())));
  }
  tracker.make_dirs(out);
  const fs::path csv = out / (scene_name(scene_path) + "_beampattern.csv");
  tracker.add_file(csv);
  write_beam_pattern_csv(csv, pattern);
  return {csv};
}

}  // namespace beamkit
