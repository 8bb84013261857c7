#include "beamkit/sources.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "beamkit/error.hpp"
#include "beamkit/signal_io.hpp"
#include "random.hpp"

namespace beamkit {

namespace {

constexpr double kSpeechRms = 0.1;

struct Formant {
  double centre;
  double bandwidth;
};

double formant_gain(double freq, const std::vector<Formant>& formants) {
  double g = 0.0;
  for (const auto& f : formants) {
    const double x = (freq - f.centre) / f.bandwidth;
    g += 1.0 / (1.0 + x * x);
  }
  return g;
}

// Raised-sine attack and release over a segment of n samples.
double envelope(std::size_t i, std::size_t n) {
  const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return std::sqrt(std::sin(std::numbers::pi * x));
}

}  // namespace

Eigen::VectorXd synthetic_speech(std::uint64_t seed, std::size_t length, int sample_rate) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x5bd1e995ull));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double fs = sample_rate;
  const double nyquist_cap = std::min(4000.0, 0.45 * fs);
  const double base_f0 = uniform(rng, 90.0, 220.0);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length));
  // The lead-in stays inside the clip and the first event is voiced, so even
  // short clips are never silent.
  std::size_t pos = std::min(static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * fs), length / 4);
  double phase = 0.0;
  bool first = true;
  while (pos < length) {
    const double kind = first ? 1.0 : uniform(rng, 0.0, 1.0);
    first = false;
    if (kind < 0.22) {
      pos += static_cast<std::size_t>(uniform(rng, 0.06, 0.3) * fs);
      continue;
    }
    if (kind < 0.36) {
      const auto n = static_cast<std::size_t>(uniform(rng, 0.04, 0.12) * fs);
      const double level = uniform(rng, 0.15, 0.4);
      double prev = 0.0;
      for (std::size_t i = 0; i < n && pos + i < length; ++i) {
        const double w = gauss(rng);
        out[static_cast<Eigen::Index>(pos + i)] += level * envelope(i, n) * (w - 0.9 * prev);
        prev = w;
      }
      pos += n;
      continue;
    }
    const auto n = static_cast<std::size_t>(uniform(rng, 0.12, 0.35) * fs);
    const double f0_start = base_f0 * uniform(rng, 0.85, 1.2);
    const double f0_end = base_f0 * uniform(rng, 0.8, 1.15);
    const std::vector<Formant> formants{{uniform(rng, 300.0, 850.0), 90.0},
                                        {uniform(rng, 850.0, 2400.0), 130.0},
                                        {uniform(rng, 2400.0, 3300.0), 200.0}};
    const double level = uniform(rng, 0.5, 1.0);
    const int harmonics = static_cast<int>(nyquist_cap / std::min(f0_start, f0_end));
    std::vector<double> gains(static_cast<std::size_t>(harmonics) + 1, 0.0);
    const double mean_f0 = 0.5 * (f0_start + f0_end);
    for (int h = 1; h <= harmonics; ++h) {
      gains[h] = formant_gain(h * mean_f0, formants) / std::sqrt(static_cast<double>(h));
    }
    for (std::size_t i = 0; i < n && pos + i < length; ++i) {
      const double frac = static_cast<double>(i) / static_cast<double>(n);
      const double f0 = f0_start + (f0_end - f0_start) * frac;
      phase += 2.0 * std::numbers::pi * f0 / fs;
      if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
      double v = 0.0;
      for (int h = 1; h <= harmonics && h * f0 < nyquist_cap; ++h) v += gains[h] * std::sin(h * phase);
      out[static_cast<Eigen::Index>(pos + i)] += level * envelope(i, n) * v;
    }
    pos += n;
  }

  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(std::max<std::size_t>(1, length)));
  if (rms > 0.0) out *= kSpeechRms / rms;
  return out;
}

Eigen::MatrixXd pink_noise(std::uint64_t seed, int channels, std::size_t length) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x27d4eb2full));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd out(channels, static_cast<Eigen::Index>(length));
  for (int c = 0; c < channels; ++c) {
    // Paul Kellet's refined pink filter.
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (std::size_t i = 0; i < length; ++i) {
      const double white = gauss(rng);
      b0 = 0.99886 * b0 + white * 0.0555179;
      b1 = 0.99332 * b1 + white * 0.0750759;
      b2 = 0.96900 * b2 + white * 0.1538520;
      b3 = 0.86650 * b3 + white * 0.3104856;
      b4 = 0.55000 * b4 + white * 0.5329522;
      b5 = -0.7616 * b5 - white * 0.0168980;
      out(c, static_cast<Eigen::Index>(i)) = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
      b6 = white * 0.115926;
    }
    const double rms = std::sqrt(out.row(c).squaredNorm() / static_cast<double>(std::max<std::size_t>(1, length)));
    if (rms > 0.0) out.row(c) /= rms;
  }
  return out;
}

Eigen::MatrixXd diffuse_field(const Eigen::MatrixXd& independent, const std::vector<Vec3>& mics,
                              int sample_rate, double speed_of_sound) {
  const auto M = static_cast<int>(mics.size());
  if (independent.rows() != M) throw InvalidArgument("diffuse_field: one input channel per mic");
  if (independent.cols() == 0) return independent;
  StftConfig cfg;
  const Spectrogram in = stft(MultichannelWave{independent, sample_rate}, cfg);
  Spectrogram out = in;
  Eigen::MatrixXd gamma(M, M);
  Eigen::VectorXcd y(M);
  for (int k = 0; k < in.bins(); ++k) {
    const double f = in.bin_frequency(k);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        const double x = 2.0 * std::numbers::pi * f * (mics[i] - mics[j]).norm() / speed_of_sound;
        gamma(i, j) = x == 0.0 ? 1.0 : std::sin(x) / x;
      }
    // gamma = V L V^T; mixing with V sqrt(L) gives the target coherence.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gamma);
    const Eigen::MatrixXd mix =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    for (int t = 0; t < in.frames(); ++t) {
      for (int m = 0; m < M; ++m) y(m) = in(m, t, k);
      const Eigen::VectorXcd z = mix.cast<Complex>() * y;
      for (int m = 0; m < M; ++m) out(m, t, k) = z(m);
    }
  }
  return istft(out, static_cast<std::size_t>(independent.cols())).samples;
}

std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("corpus directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav files in corpus directory " + dir.string());
  return files;
}

Eigen::VectorXd corpus_excerpt(const std::vector<std::filesystem::path>& files,
                               std::uint64_t seed, std::size_t length, int sample_rate) {
  if (files.empty()) throw InvalidArgument("empty corpus");
  std::mt19937_64 rng(mix_seed(seed));
  const auto& path = files[rng() % files.size()];
  const MultichannelWave wave = read_wav(path);
  if (wave.sample_rate != sample_rate) {
    throw InvalidArgument("corpus file " + path.string() + " has sample rate " +
                          std::to_string(wave.sample_rate) + ", expected " +
                          std::to_string(sample_rate));
  }
  const auto available = static_cast<std::size_t>(wave.length());
  const std::size_t offset = available > length ? rng() % (available - length + 1) : 0;
  Eigen::VectorXd out(static_cast<Eigen::Index>(length));
  for (std::size_t i = 0; i < length; ++i) {
    out[static_cast<Eigen::Index>(i)] =
        wave.samples(0, static_cast<Eigen::Index>((offset + i) % available));
  }
  return out;
}

}  // namespace beamkit
