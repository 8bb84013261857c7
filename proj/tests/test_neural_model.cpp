#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "beamkit/error.hpp"
#include "beamkit/neural/checkpoint.hpp"
#include "beamkit/neural/model.hpp"
#include "beamkit/neural/ops.hpp"
#include "beamkit/neural/spectral_ops.hpp"
#include "beamkit/neural/train.hpp"
#include "beamkit/room_sim.hpp"
#include "support.hpp"

namespace beamkit::nn {
namespace {

using beamkit::testing::check_gradients;
using beamkit::testing::random_tensor;

// Model gradients span ~1e-6 to ~1e-1 and the pre-separator has PReLU kinks,
// so no single finite-difference step suits every coordinate.
using beamkit::testing::kAdaptiveStep;

// fft 128 gives F = 65, which the three stride-2 levels divide.
StftConfig small_stft() {
  StftConfig cfg;
  cfg.window_len = 128;
  cfg.hop = 64;
  cfg.fft_size = 128;
  return cfg;
}

ExtractorConfig small_model(MaskKind kind = MaskKind::kCrm) {
  ExtractorConfig cfg;
  cfg.pre.bins = 65;
  cfg.pre.mask_kind = kind;
  return cfg;
}

// `frames` STFT frames cut from a short generated scene.
TrainingExample small_example(std::uint64_t seed, int frames) {
  SimulationConfig sim;
  sim.clip_seconds = 0.5;
  const auto scene = generate_scene(seed, sim);
  const auto cfg = small_stft();
  return make_example(scene, cfg, "ex" + std::to_string(seed),
                      static_cast<std::size_t>(cfg.window_len + (frames - 1) * cfg.hop));
}

std::vector<Tensor> params_of(const ParamStore& store, std::vector<std::string>* labels) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) {
    out.push_back(e.tensor);
    if (labels) labels->push_back(e.name);
  }
  return out;
}

Tensor probe(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(rng, out.shape(), 1.0, false)));
}

TEST(PreSeparator, GradientsMatchFiniteDifferences) {
  for (MaskKind kind : {MaskKind::kCrm, MaskKind::kIrm}) {
    ParamStore store(3);
    auto pcfg = small_model(kind).pre;
    const PreSeparator net(pcfg, store);
    std::mt19937_64 rng(4);
    const auto feats = random_tensor(rng, {5, 65, 2});
    std::vector<std::string> labels;
    auto inputs = params_of(store, &labels);
    inputs.push_back(feats);
    labels.push_back("features");
    const auto r = check_gradients(
        inputs, labels,
        [&] {
          const auto m = net(feats);
          return add(probe(m.speech, 10), probe(m.noise, 11));
        },
        5, 4, kAdaptiveStep);
    EXPECT_LT(r.max_relative_error, 1e-3) << to_string(kind) << " worst " << r.worst;
    EXPECT_GT(r.coordinates, 100);
  }
}

struct NetInputs {
  Tensor phi_ss, phi_nn, cos_ipd, af;
};

NetInputs random_net_inputs(std::mt19937_64& rng, int frames, bool param) {
  return {random_tensor(rng, {frames, 65, 2, 4, 4}, 1.0, param),
          random_tensor(rng, {frames, 65, 2, 4, 4}, 1.0, param),
          random_tensor(rng, {3, 65, frames}, 0.5, param),
          random_tensor(rng, {65, frames}, 0.5, param)};
}

TEST(BeamformerNet, GradientsMatchFiniteDifferences) {
  ParamStore store(6);
  const BeamformerNet net(BeamformerNetConfig::toy(), store);
  std::mt19937_64 rng(7);
  const auto in = random_net_inputs(rng, 2, true);
  std::vector<std::string> labels;
  auto inputs = params_of(store, &labels);
  for (const auto& [t, name] : {std::pair{in.phi_ss, "phi_ss"}, std::pair{in.phi_nn, "phi_nn"},
                                std::pair{in.cos_ipd, "cos_ipd"}, std::pair{in.af, "af"}}) {
    inputs.push_back(t);
    labels.push_back(name);
  }
  const auto r = check_gradients(
      inputs, labels, [&] { return probe(net(in.phi_ss, in.phi_nn, in.cos_ipd, in.af), 12); }, 8,
      4, kAdaptiveStep);
  EXPECT_LT(r.max_relative_error, 1e-3) << "worst " << r.worst;
}

TEST(BeamformerNet, FramesAreProcessedIndependently) {
  // Swapping the frames of every input swaps the output frames.
  ParamStore store(9);
  const BeamformerNet net(BeamformerNetConfig::toy(), store);
  std::mt19937_64 rng(10);
  const auto in = random_net_inputs(rng, 2, false);
  const auto swap_first = [](const Tensor& t) {
    return concat({slice(t, 0, 1, 1), slice(t, 0, 0, 1)}, 0);
  };
  const auto swap_last = [](const Tensor& t) {
    const int axis = t.rank() - 1;
    return concat({slice(t, axis, 1, 1), slice(t, axis, 0, 1)}, axis);
  };
  const auto out = net(in.phi_ss, in.phi_nn, in.cos_ipd, in.af);
  const auto swapped = net(swap_first(in.phi_ss), swap_first(in.phi_nn), swap_last(in.cos_ipd),
                           swap_last(in.af));
  const auto expected = swap_first(out);
  ASSERT_EQ(swapped.shape(), out.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    EXPECT_NEAR(swapped.values()[i], expected.values()[i], 1e-12);
}

TEST(BeamformerNet, ZeroCovarianceGivesFrameConstantOutput) {
  ParamStore store(11);
  const BeamformerNet net(BeamformerNetConfig::toy(), store);
  std::mt19937_64 rng(12);
  const auto one = random_net_inputs(rng, 1, false);
  const auto zeros = Tensor::zeros({3, 65, 2, 4, 4});
  const auto out = net(zeros, zeros, concat({one.cos_ipd, one.cos_ipd, one.cos_ipd}, 2),
                       concat({one.af, one.af, one.af}, 1));
  ASSERT_EQ(out.shape(), (Shape{3, 65, 8}));
  EXPECT_TRUE(std::all_of(out.values().begin(), out.values().end(),
                          [](double v) { return std::isfinite(v); }));
  const std::size_t frame = 65 * 8;
  for (std::size_t i = 0; i < frame; ++i) {
    EXPECT_EQ(out.values()[i], out.values()[frame + i]);
    EXPECT_EQ(out.values()[i], out.values()[2 * frame + i]);
  }
}

TEST(BeamformerNet, FrameCountMismatchFails) {
  ParamStore store(13);
  const BeamformerNet net(BeamformerNetConfig::toy(), store);
  std::mt19937_64 rng(14);
  const auto a = random_net_inputs(rng, 2, false);
  const auto b = random_net_inputs(rng, 3, false);
  EXPECT_THROW(net(a.phi_ss, a.phi_nn, b.cos_ipd, a.af), InvalidArgument);
  EXPECT_THROW(net(a.phi_ss, b.phi_nn, a.cos_ipd, a.af), InvalidArgument);
  EXPECT_THROW(net(a.phi_ss, a.phi_nn, a.cos_ipd, b.af), InvalidArgument);
}

TEST(NeuralExtractor, MaskShapesAndRanges) {
  const auto ex = small_example(21, 3);
  {
    const NeuralExtractor model(small_model(MaskKind::kIrm), 1);
    const auto out = model.forward(ex.mixture, ex.features, ex.length);
    EXPECT_EQ(out.masks.speech.shape(), (Shape{65, 3}));
    EXPECT_EQ(out.masks.noise.shape(), (Shape{65, 3}));
    for (double v : out.masks.speech.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_EQ(out.weights.shape(), (Shape{3, 65, 8}));
    EXPECT_EQ(out.spectrum.shape(), (Shape{3, 65, 2}));
    EXPECT_EQ(out.waveform.shape(), (Shape{static_cast<int>(ex.length)}));
  }
  const NeuralExtractor model(small_model(MaskKind::kCrm), 1);
  const auto out = model.forward(ex.mixture, ex.features, ex.length);
  EXPECT_EQ(out.masks.speech.shape(), (Shape{2, 65, 3}));
}

TEST(NeuralExtractor, ShapeMismatchesFail) {
  const auto ex = small_example(22, 2);
  const NeuralExtractor model(small_model(), 1);
  ExtractorConfig wide = small_model();
  wide.pre.bins = 129;
  const NeuralExtractor wrong(wide, 1);
  EXPECT_THROW(wrong.forward(ex.mixture, ex.features, ex.length), InvalidArgument);
  Spectrogram three(3, ex.mixture.frames(), ex.mixture.config(), ex.mixture.original_length(),
                    16000);
  EXPECT_THROW(model.forward(three, ex.features, ex.length), InvalidArgument);
}

Tensor model_loss(const NeuralExtractor& model, const TrainingExample& ex) {
  const auto out = model.forward(ex.mixture, ex.features, ex.length);
  return joint_loss(out.waveform, ex.ref_wave, out.spectrum, ex.ref_spec);
}

TEST(NeuralExtractor, EndToEndGradients) {
  const auto ex = small_example(23, 2);
  NeuralExtractor model(small_model(), 2);
  std::vector<std::string> labels;
  auto params = params_of(model.params(), &labels);
  // The full loss carries about 1e-14 of rounding noise, so central differences
  // cannot resolve gradients much below 1e-8. The directional check covers those.
  const auto r = check_gradients(params, labels, [&] { return model_loss(model, ex); }, 24, 3,
                                 kAdaptiveStep, 1e-8);
  EXPECT_LT(r.max_relative_error, 1e-3) << "worst " << r.worst;

  // Directional derivative along one random direction over all parameters.
  model.params().zero_grad();
  model_loss(model, ex).backward();
  std::mt19937_64 rng(25);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> dir;
  double analytic = 0.0;
  for (const auto& p : params) {
    dir.emplace_back(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      dir.back()[i] = n(rng);
      if (p.has_grad()) analytic += p.grad()[i] * dir.back()[i];
    }
  }
  const auto shift = [&](double step) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto v = params[k].mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += step * dir[k][i];
    }
  };
  NoGradGuard no_grad;
  const double eps = 1e-6;
  shift(eps);
  const double up = model_loss(model, ex).item();
  shift(-2.0 * eps);
  const double down = model_loss(model, ex).item();
  shift(eps);
  const double numeric = (up - down) / (2.0 * eps);
  EXPECT_LT(std::abs(numeric - analytic), 1e-3 * std::max(std::abs(numeric), std::abs(analytic)))
      << "numeric " << numeric << " analytic " << analytic;
}

TEST(JointLoss, IdentityAndScaling) {
  std::mt19937_64 rng(26);
  const auto w = random_tensor(rng, {300}, 1.0, false);
  const auto s = random_tensor(rng, {4, 9, 2}, 1.0, false);
  EXPECT_DOUBLE_EQ(joint_loss(w, w, s, s).item(), -60.0);

  const auto ew = random_tensor(rng, {300}, 1.0, false);
  const auto es = random_tensor(rng, {4, 9, 2}, 1.0, false);
  const double base = joint_loss(ew, w, es, s).item();
  const double doubled = joint_loss(scale(ew, 2.0), w, scale(es, 2.0), s).item();
  const double mse_change = mse(scale(es, 2.0), s).item() - mse(es, s).item();
  EXPECT_NEAR(doubled - base, mse_change, 1e-9 * (1.0 + std::abs(mse_change)));
  EXPECT_NEAR(si_sdr_tensor(scale(ew, 2.0), w).item(), si_sdr_tensor(ew, w).item(), 1e-9);
}

TrainConfig quick_training(int steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.seed = 7;
  cfg.smoothing = 2;
  return cfg;
}

TEST(Training, SameSeedGivesBitIdenticalTraces) {
  const std::vector<TrainingExample> examples{small_example(31, 3), small_example(32, 3)};
  const auto run = [&] {
    NeuralExtractor model(small_model(), 5);
    return train(model, examples, quick_training(4)).trace;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 4u);
  ASSERT_EQ(b.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].grad_norm, b[i].grad_norm);
    EXPECT_EQ(a[i].example, b[i].example);
    EXPECT_EQ(a[i].step, static_cast<int>(i));
  }
  for (const auto& rec : a) EXPECT_NEAR(rec.loss, -rec.si_sdr_db + rec.mse, 1e-9);
}

TEST(Training, DivergenceNamesTheStep) {
  const std::vector<TrainingExample> examples{small_example(33, 2)};
  NeuralExtractor model(small_model(), 5);
  auto cfg = quick_training(5);
  cfg.learning_rate = 1e300;
  cfg.grad_clip = 1e300;
  try {
    train(model, examples, cfg);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(Training, ConfigValidationListsProblems) {
  TrainConfig cfg;
  cfg.steps = 0;
  cfg.learning_rate = -1.0;
  try {
    cfg.validate();
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("steps"), std::string::npos);
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
  }
}

TEST(Training, SmoothedLossIsATrailingMean) {
  std::vector<StepRecord> trace(5);
  for (int i = 0; i < 5; ++i) trace[static_cast<std::size_t>(i)].loss = i;
  const auto s = smoothed_loss(trace, 2);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_DOUBLE_EQ(s[4], 3.5);
}

TEST(Checkpoint, RoundtripIsBitExact) {
  const auto ex = small_example(41, 2);
  NeuralExtractor model(small_model(MaskKind::kIrm), 17);
  // Move away from the initialization so restored values are not regenerated.
  train(model, std::vector<TrainingExample>{ex}, quick_training(2));
  testing::TempDir dir("ckpt");
  save_checkpoint(dir / "m.bkc", model, small_stft());

  std::ifstream raw(dir / "m.bkc", std::ios::binary);
  char magic[8];
  raw.read(magic, 8);
  EXPECT_EQ(std::memcmp(magic, "BKCKPT\0\0", 8), 0);
  std::uint32_t version = 0;
  raw.read(reinterpret_cast<char*>(&version), 4);
  EXPECT_EQ(version, kCheckpointVersion);

  const auto ck = read_checkpoint(dir / "m.bkc");
  EXPECT_EQ(ck.seed, 17u);
  EXPECT_EQ(ck.stft.fft_size, 128);
  EXPECT_EQ(ck.config.pre.mask_kind, MaskKind::kIrm);
  EXPECT_EQ(ck.tensors.size(), model.params().size());
  const auto restored = restore_model(ck);
  const auto& a = model.params().entries();
  const auto& b = restored.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(std::equal(a[i].tensor.values().begin(), a[i].tensor.values().end(),
                           b[i].tensor.values().begin()))
        << a[i].name;
  }
  const auto out_a = model.forward(ex.mixture, ex.features, ex.length);
  const auto out_b = restored.forward(ex.mixture, ex.features, ex.length);
  const auto x = out_a.waveform.values();
  const auto y = out_b.waveform.values();
  ASSERT_EQ(x.size(), y.size());
  EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));

  save_checkpoint(dir / "again.bkc", restored, ck.stft);
  std::ifstream f1(dir / "m.bkc", std::ios::binary), f2(dir / "again.bkc", std::ios::binary);
  const std::string s1{std::istreambuf_iterator<char>(f1), {}};
  const std::string s2{std::istreambuf_iterator<char>(f2), {}};
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, CorruptOrMismatchedFilesFail) {
  testing::TempDir dir("ckpt_bad");
  {
    std::ofstream(dir / "junk.bkc") << "definitely not a checkpoint";
  }
  EXPECT_THROW(read_checkpoint(dir / "junk.bkc"), IoError);
  EXPECT_THROW(read_checkpoint(dir / "missing.bkc"), IoError);

  const NeuralExtractor model(small_model(), 3);
  save_checkpoint(dir / "m.bkc", model, small_stft());
  {
    std::ifstream in(dir / "m.bkc", std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    std::ofstream(dir / "cut.bkc", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(read_checkpoint(dir / "cut.bkc"), IoError);

  auto ck = read_checkpoint(dir / "m.bkc");
  ck.tensors.front().shape.push_back(1);
  NeuralExtractor other(small_model(), 4);
  EXPECT_THROW(load_parameters(ck, other.params()), InvalidArgument);
}

TEST(MaskKindText, ParsesBothKinds) {
  EXPECT_EQ(parse_mask_kind("irm"), MaskKind::kIrm);
  EXPECT_EQ(parse_mask_kind("crm"), MaskKind::kCrm);
  EXPECT_STREQ(to_string(MaskKind::kCrm), "crm");
  EXPECT_THROW(parse_mask_kind("mvdr"), InvalidArgument);
}

}  // namespace
}  // namespace beamkit::nn
