#include "beamkit/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "beamkit/error.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/neural/ops.hpp"
#include "beamkit/neural/spectral_ops.hpp"
#include "random.hpp"

namespace beamkit::nn {

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (steps < 1) problems.push_back("steps must be >= 1");
  if (!(learning_rate > 0.0)) problems.push_back("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) problems.push_back("lr_decay must be in (0, 1]");
  if (!(grad_clip > 0.0)) problems.push_back("grad_clip must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    problems.push_back("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) problems.push_back("epsilon must be positive");
  if (smoothing < 1) problems.push_back("smoothing must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

TrainingExample make_example(const MixtureScene& scene, const StftConfig& stft_cfg, std::string id,
                             std::size_t max_samples) {
  const auto total = static_cast<std::size_t>(scene.mixture.samples.cols());
  const std::size_t length = max_samples > 0 ? std::min(max_samples, total) : total;
  const int ref = scene.array.reference_mic;
  const auto n = static_cast<Eigen::Index>(length);

  MultichannelWave mix{scene.mixture.samples.leftCols(n), scene.mixture.sample_rate};
  MultichannelWave target{scene.target_reverberant.samples.row(ref).head(n),
                          scene.target_reverberant.sample_rate};

  TrainingExample ex;
  ex.id = std::move(id);
  ex.length = length;
  ex.mixture = stft(mix, stft_cfg);
  ex.features = compute_features(ex.mixture, scene.array, scene.target_doa);
  std::vector<double> ref_wave(length);
  for (std::size_t i = 0; i < length; ++i) {
    ref_wave[i] = target.samples(0, static_cast<Eigen::Index>(i));
  }
  ex.mixture_ref.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    ex.mixture_ref[i] = mix.samples(ref, static_cast<Eigen::Index>(i));
  }
  ex.ref_wave = Tensor::constant({static_cast<int>(length)}, std::move(ref_wave));
  ex.ref_spec = channel_tensor(stft(target, stft_cfg), 0);
  return ex;
}

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int t = 0;
};

struct LossParts {
  Tensor loss;
  double si_sdr_db;
  double mse;
};

LossParts example_loss(const NeuralExtractor& model, const TrainingExample& ex) {
  const auto out = model.forward(ex.mixture, ex.features, ex.length);
  const Tensor sdr = si_sdr_tensor(out.waveform, ex.ref_wave);
  const Tensor err = mse(out.spectrum, ex.ref_spec);
  return {add(scale(sdr, -1.0), err), sdr.item(), err.item()};
}

}  // namespace

TrainResult train(NeuralExtractor& model, std::span<const TrainingExample> examples,
                  const TrainConfig& cfg, const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  if (examples.empty()) throw InvalidArgument("training needs at least one example");

  auto& entries = model.params().entries();
  AdamState adam;
  for (const auto& e : entries) {
    adam.m.emplace_back(e.tensor.size(), 0.0);
    adam.v.emplace_back(e.tensor.size(), 0.0);
  }

  std::mt19937_64 rng(mix_seed(cfg.seed));
  std::vector<std::size_t> order(examples.size());
  TrainResult result;
  std::size_t cursor = order.size();
  int epoch = -1;

  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
      ++epoch;
    }
    const TrainingExample& ex = examples[order[cursor++]];
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);

    model.params().zero_grad();
    StepRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.example = ex.id;
    rec.learning_rate = lr;
    try {
      const LossParts parts = example_loss(model, ex);
      rec.loss = parts.loss.item();
      rec.si_sdr_db = parts.si_sdr_db;
      rec.mse = parts.mse;
      if (!std::isfinite(rec.loss)) throw NumericError("loss is not finite");
      parts.loss.backward();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    double norm2 = 0.0;
    for (auto& e : entries) {
      if (!e.tensor.has_grad()) continue;
      for (double g : e.tensor.grad()) norm2 += g * g;
    }
    rec.grad_norm = std::sqrt(norm2);
    if (!std::isfinite(rec.grad_norm)) {
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": gradient norm is not finite");
    }
    const double clip = rec.grad_norm > cfg.grad_clip ? cfg.grad_clip / rec.grad_norm : 1.0;

    ++adam.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, adam.t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, adam.t);
    for (std::size_t p = 0; p < entries.size(); ++p) {
      auto& t = entries[p].tensor;
      if (!t.has_grad()) continue;
      auto values = t.mutable_values();
      const auto grad = t.grad();
      auto& m = adam.m[p];
      auto& v = adam.v[p];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grad[i] * clip;
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
      }
    }
    model.params().zero_grad();
    result.trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

std::vector<double> smoothed_loss(const std::vector<StepRecord>& trace, int window) {
  if (window < 1) throw InvalidArgument("smoothing window must be >= 1");
  std::vector<double> out(trace.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    acc += trace[i].loss;
    if (i >= static_cast<std::size_t>(window)) acc -= trace[i - window].loss;
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<StepRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,example,loss,si_sdr_db,mse,learning_rate,grad_norm\n";
  out << std::setprecision(17);
  for (const auto& r : trace) {
    out << r.step << ',' << r.epoch << ',' << r.example << ',' << r.loss << ',' << r.si_sdr_db
        << ',' << r.mse << ',' << r.learning_rate << ',' << r.grad_norm << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

double output_si_sdr(const NeuralExtractor& model, const TrainingExample& example) {
  NoGradGuard guard;
  const auto out = model.forward(example.mixture, example.features, example.length);
  return si_sdr(out.waveform.values(), example.ref_wave.values());
}

double mixture_si_sdr(const TrainingExample& example) {
  return si_sdr(example.mixture_ref, example.ref_wave.values());
}

}  // namespace beamkit::nn
