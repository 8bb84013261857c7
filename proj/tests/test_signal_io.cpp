#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "beamkit/error.hpp"
#include "beamkit/signal_io.hpp"
#include "support.hpp"

namespace beamkit {
namespace {

using testing::random_signal;
using testing::TempDir;
using testing::wave_of;

double relative_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

TEST(Wav, FourChannelHeaderPassthrough) {
  TempDir dir("wav");
  std::mt19937_64 rng(1);
  Eigen::MatrixXd x = random_signal(rng, 4, 64000).cwiseMax(-1.0).cwiseMin(1.0);
  write_wav(dir / "a.wav", wave_of(x));
  const auto back = read_wav(dir / "a.wav");
  EXPECT_EQ(back.channels(), 4);
  EXPECT_EQ(back.length(), 64000);
  EXPECT_EQ(back.sample_rate, 16000);
}

TEST(Wav, Pcm16RoundtripWithinOneStep) {
  TempDir dir("wav");
  std::mt19937_64 rng(2);
  for (int channels = 1; channels <= 8; ++channels) {
    Eigen::MatrixXd x = random_signal(rng, channels, 1000).cwiseMax(-1.0).cwiseMin(1.0);
    x(0, 0) = 1.0;
    x(0, 1) = -1.0;
    write_wav(dir / "p.wav", wave_of(x), WavEncoding::kPcm16);
    const auto back = read_wav(dir / "p.wav");
    ASSERT_EQ(back.channels(), channels);
    EXPECT_LT((back.samples - x).cwiseAbs().maxCoeff(), std::ldexp(1.0, -15));
  }
}

TEST(Wav, Float32RoundtripIsFloatExact) {
  TempDir dir("wav");
  std::mt19937_64 rng(3);
  Eigen::MatrixXd x = random_signal(rng, 3, 500).cwiseMax(-1.0).cwiseMin(1.0);
  write_wav(dir / "f.wav", wave_of(x, 8000), WavEncoding::kFloat32);
  const auto back = read_wav(dir / "f.wav");
  EXPECT_EQ(back.sample_rate, 8000);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 500; ++i)
      EXPECT_EQ(back.samples(c, i), static_cast<double>(static_cast<float>(x(c, i))));
}

TEST(Wav, SilenceReadsBackAsZeros) {
  TempDir dir("wav");
  write_wav(dir / "z.wav", wave_of(Eigen::MatrixXd::Zero(2, 300)));
  EXPECT_EQ(read_wav(dir / "z.wav").samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Wav, OutOfRangeSampleIsRejected) {
  TempDir dir("wav");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 10);
  x(0, 3) = 1.5;
  EXPECT_THROW(write_wav(dir / "bad.wav", wave_of(x)), InvalidArgument);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.wav"));
}

TEST(Wav, NonFiniteSampleIsRejected) {
  TempDir dir("wav");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 10);
  x(0, 2) = std::nan("");
  EXPECT_THROW(write_wav(dir / "nan.wav", wave_of(x)), InvalidArgument);
}

TEST(Wav, EmptyMissingAndForeignFilesFail) {
  TempDir dir("wav");
  { std::ofstream(dir / "empty.wav"); }
  EXPECT_THROW(read_wav(dir / "empty.wav"), IoError);
  EXPECT_THROW(read_wav(dir / "missing.wav"), IoError);
  { std::ofstream(dir / "text.wav") << "definitely not audio, just some bytes here"; }
  EXPECT_THROW(read_wav(dir / "text.wav"), IoError);
}

TEST(Wav, ZeroLengthAudioFails) {
  TempDir dir("wav");
  write_wav(dir / "one.wav", wave_of(Eigen::MatrixXd::Zero(1, 1)));
  // Rewrite the data chunk size to zero.
  std::fstream f(dir / "one.wav", std::ios::in | std::ios::out | std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), {});
  const auto pos = bytes.find("data");
  ASSERT_NE(pos, std::string::npos);
  f.seekp(static_cast<std::streamoff>(pos + 4));
  const char zero[4] = {0, 0, 0, 0};
  f.write(zero, 4);
  f.close();
  EXPECT_THROW(read_wav(dir / "one.wav"), IoError);
}

TEST(StftConfig, ValidationRules) {
  StftConfig ok;
  EXPECT_NO_THROW(ok.validate());
  EXPECT_EQ(ok.num_bins(), 257);
  StftConfig big_hop = ok;
  big_hop.hop = 600;
  EXPECT_THROW(big_hop.validate(), InvalidArgument);
  StftConfig odd_fft = ok;
  odd_fft.fft_size = 600;
  EXPECT_THROW(odd_fft.validate(), InvalidArgument);
  StftConfig no_cola = ok;
  no_cola.hop = 200;
  EXPECT_FALSE(satisfies_cola(no_cola));
  EXPECT_THROW(no_cola.validate(), InvalidArgument);
}

TEST(Window, HannVariantsHaveNoZeroTaps) {
  for (auto kind : {WindowKind::kSqrtHann, WindowKind::kHann}) {
    const auto w = make_window(kind, 512);
    for (double v : w) EXPECT_GT(v, 0.0);
  }
}

TEST(Stft, FrameCountFormula) {
  StftConfig cfg;
  EXPECT_EQ(frame_count(512, cfg), 1);
  EXPECT_EQ(frame_count(513, cfg), 2);
  EXPECT_EQ(frame_count(768, cfg), 2);
  EXPECT_EQ(frame_count(16000, cfg), 1 + static_cast<int>(std::ceil((16000.0 - 512) / 256)));
  const auto spec = stft(wave_of(Eigen::MatrixXd::Ones(2, 1000)), cfg);
  EXPECT_EQ(spec.frames(), frame_count(1000, cfg));
  EXPECT_EQ(spec.bins(), 257);
  EXPECT_EQ(spec.original_length(), 1000u);
}

TEST(Stft, ShorterThanOneWindowFails) {
  EXPECT_THROW(stft(wave_of(Eigen::MatrixXd::Ones(1, 100)), StftConfig{}), InvalidArgument);
}

TEST(Stft, ZeroInputGivesZeroSpectrogram) {
  const auto spec = stft(wave_of(Eigen::MatrixXd::Zero(2, 2000)), StftConfig{});
  for (const auto& c : spec.data()) EXPECT_EQ(std::abs(c), 0.0);
}

TEST(Stft, BinCentredSineConcentratesInItsBin) {
  StftConfig cfg;
  cfg.window = WindowKind::kRectangular;
  const int k = 40;
  Eigen::MatrixXd x(1, 4096);
  for (int n = 0; n < x.cols(); ++n)
    x(0, n) = std::sin(2.0 * std::numbers::pi * k * n / cfg.fft_size);
  const auto spec = stft(wave_of(x), cfg);
  for (int t = 0; t < spec.frames() - 1; ++t) {
    double total = 0.0;
    for (int f = 0; f < spec.bins(); ++f) total += std::norm(spec(0, t, f));
    EXPECT_GT(std::norm(spec(0, t, k)) / total, 0.99) << "frame " << t;
  }
}

TEST(Stft, IdenticalChannelsGiveIdenticalSlices) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd one = random_signal(rng, 1, 3000);
  Eigen::MatrixXd two(2, 3000);
  two << one, one;
  const auto spec = stft(wave_of(two), StftConfig{});
  for (int t = 0; t < spec.frames(); ++t)
    for (int f = 0; f < spec.bins(); ++f) EXPECT_EQ(spec(0, t, f), spec(1, t, f));
}

TEST(Istft, RoundtripOnOneSecondNoise) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = random_signal(rng, 1, 16000);
  const auto y = istft(stft(wave_of(x), StftConfig{}), 16000);
  EXPECT_LT(relative_l2(y.samples, x), 1e-6);
}

TEST(Istft, RoundtripHoldsForEveryWindowAndOddLengths) {
  std::mt19937_64 rng(6);
  for (auto kind : {WindowKind::kSqrtHann, WindowKind::kHann, WindowKind::kRectangular}) {
    for (int length : {512, 777, 5001}) {
      StftConfig cfg;
      cfg.window = kind;
      // Squared Hann only sums to a constant at 75% overlap.
      if (kind == WindowKind::kHann) cfg.hop = 128;
      const Eigen::MatrixXd x = random_signal(rng, 2, length);
      const auto y = istft(stft(wave_of(x), cfg), static_cast<std::size_t>(length));
      ASSERT_EQ(y.length(), length);
      EXPECT_LT(relative_l2(y.samples, x), 1e-6);
    }
  }
}

TEST(Istft, ZeroSpectrogramGivesZeroWave) {
  Spectrogram spec(3, 10, StftConfig{}, 2800, 16000);
  const auto y = istft(spec, 2800);
  EXPECT_EQ(y.channels(), 3);
  EXPECT_EQ(y.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Istft, ChannelOrderIsPreserved) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2000);
  for (int c = 0; c < 4; ++c) x.row(c).setConstant(0.1 * (c + 1));
  const auto y = istft(stft(wave_of(x), StftConfig{}), 2000);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(y.samples.row(c).mean(), 0.1 * (c + 1), 1e-9);
}

TEST(StftProperty, LinearityToMachinePrecision) {
  std::mt19937_64 rng(7);
  const StftConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd x = random_signal(rng, 2, 3000);
    const Eigen::MatrixXd y = random_signal(rng, 2, 3000);
    const double a = 1.7, b = -0.4;
    const auto sx = stft(wave_of(x), cfg), sy = stft(wave_of(y), cfg);
    const auto sxy = stft(wave_of(a * x + b * y), cfg);
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < sxy.data().size(); ++i) {
      err = std::max(err, std::abs(sxy.data()[i] - (a * sx.data()[i] + b * sy.data()[i])));
      ref = std::max(ref, std::abs(sxy.data()[i]));
    }
    EXPECT_LT(err, 1e-12 * ref);
  }
}

TEST(StftProperty, ParsevalWithinOnePercent) {
  std::mt19937_64 rng(8);
  const StftConfig cfg;
  const Eigen::MatrixXd x = random_signal(rng, 1, 32000);
  const auto spec = stft(wave_of(x), cfg);
  // One-sided bins stand for two two-sided bins except DC and Nyquist.
  double spectral = 0.0;
  for (int t = 0; t < spec.frames(); ++t) {
    for (int f = 0; f < spec.bins(); ++f) {
      const double weight = (f == 0 || f == spec.bins() - 1) ? 1.0 : 2.0;
      spectral += weight * std::norm(spec(0, t, f));
    }
  }
  spectral /= cfg.fft_size;
  // Window power gain per sample: sum over overlapping frames of w^2.
  const auto w = make_window(cfg.window, cfg.window_len);
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  const double gain = w2 / cfg.hop;
  EXPECT_NEAR(spectral / (gain * x.squaredNorm()), 1.0, 0.01);
}

TEST(StftProperty, RoundtripOnRandomMultichannelSignals) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> len(16000, 64000);
  std::uniform_int_distribution<int> ch(1, 4);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = len(rng);
    const Eigen::MatrixXd x = random_signal(rng, ch(rng), n);
    const auto y = istft(stft(wave_of(x), StftConfig{}), static_cast<std::size_t>(n));
    EXPECT_LT(relative_l2(y.samples, x), 1e-6);
  }
}

TEST(Synthesis, AdjointMatchesInnerProducts) {
  // <S c, g> == <c, S^T g> for the real-linear synthesis map.
  StftConfig cfg;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  const int frames = 6;
  const std::size_t length = 1700;
  std::vector<Complex> coeffs(static_cast<std::size_t>(frames) * cfg.num_bins());
  for (auto& c : coeffs) c = {n(rng), n(rng)};
  std::vector<double> g(length);
  for (auto& v : g) v = n(rng);
  const auto s = synthesize_channel(coeffs, frames, cfg, length);
  const auto st = synthesize_channel_adjoint(g, frames, cfg);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < length; ++i) lhs += s[i] * g[i];
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    rhs += coeffs[i].real() * st[i].real() + coeffs[i].imag() * st[i].imag();
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(MultichannelWave, ValidateRejectsBadWaves) {
  EXPECT_THROW(wave_of(Eigen::MatrixXd(2, 0)).validate(), InvalidArgument);
  EXPECT_THROW(wave_of(Eigen::MatrixXd::Zero(1, 4), 0).validate(), InvalidArgument);
  Eigen::MatrixXd inf = Eigen::MatrixXd::Zero(1, 4);
  inf(0, 1) = INFINITY;
  EXPECT_THROW(wave_of(inf).validate(), InvalidArgument);
}

}  // namespace
}  // namespace beamkit
