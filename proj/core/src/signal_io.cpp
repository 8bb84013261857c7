#include "beamkit/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "beamkit/error.hpp"
#include "dsp.hpp"

namespace beamkit {

void MultichannelWave::validate() const {
  if (sample_rate <= 0) {
    throw InvalidArgument("sample_rate must be positive, got " +
                          std::to_string(sample_rate));
  }
  if (samples.rows() == 0 || samples.cols() == 0) {
    throw InvalidArgument("wave has no samples");
  }
  if (!samples.allFinite()) throw InvalidArgument("wave contains non-finite samples");
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (kind == WindowKind::kRectangular) return w;
  for (int n = 0; n < length; ++n) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (n + 0.5) / length);
    w[n] = kind == WindowKind::kSqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

namespace {

// sum_k w^2[n - k*hop] for n in [0, hop).
std::vector<double> overlap_profile(const std::vector<double>& w, int hop) {
  std::vector<double> acc(static_cast<std::size_t>(hop), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) acc[i % hop] += w[i] * w[i];
  return acc;
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

bool satisfies_cola(const StftConfig& cfg) {
  if (cfg.hop <= 0 || cfg.window_len <= 0) return false;
  const auto profile = overlap_profile(make_window(cfg.window, cfg.window_len), cfg.hop);
  const auto [lo, hi] = std::minmax_element(profile.begin(), profile.end());
  return *lo > 0.0 && (*hi - *lo) <= 1e-10 * *hi;
}

void StftConfig::validate() const {
  if (hop <= 0 || window_len <= 0 || fft_size <= 0) {
    throw InvalidArgument("STFT sizes must be positive");
  }
  if (hop > window_len || window_len > fft_size) {
    throw InvalidArgument("STFT requires hop <= window_len <= fft_size (hop=" +
                          std::to_string(hop) + ", window_len=" +
                          std::to_string(window_len) +
                          ", fft_size=" + std::to_string(fft_size) + ")");
  }
  if (!is_pow2(fft_size)) {
    throw InvalidArgument("fft_size must be a power of two, got " +
                          std::to_string(fft_size));
  }
  if (!satisfies_cola(*this)) {
    throw InvalidArgument("window does not satisfy constant overlap-add at hop " +
                          std::to_string(hop));
  }
}

Spectrogram::Spectrogram(int channels, int frames, const StftConfig& cfg,
                         std::size_t original_length, int sample_rate)
    : channels_(channels),
      frames_(frames),
      bins_(cfg.num_bins()),
      config_(cfg),
      original_length_(original_length),
      sample_rate_(sample_rate),
      data_(static_cast<std::size_t>(channels) * frames * cfg.num_bins()) {}

Spectrogram Spectrogram::channel(int channel) const {
  if (channel < 0 || channel >= channels_) {
    throw InvalidArgument("channel index out of range");
  }
  Spectrogram out(1, frames_, config_, original_length_, sample_rate_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index(channel, 0, 0)),
              static_cast<std::size_t>(frames_) * bins_, out.data_.begin());
  return out;
}

Eigen::VectorXcd Spectrogram::snapshot(int frame, int bin) const {
  Eigen::VectorXcd y(channels_);
  for (int m = 0; m < channels_; ++m) y(m) = (*this)(m, frame, bin);
  return y;
}

int frame_count(std::size_t length, const StftConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.window_len);
  if (length < win) return 0;
  const auto hop = static_cast<std::size_t>(cfg.hop);
  return 1 + static_cast<int>((length - win + hop - 1) / hop);
}

Spectrogram stft(const MultichannelWave& wave, const StftConfig& cfg) {
  cfg.validate();
  wave.validate();
  const auto length = static_cast<std::size_t>(wave.length());
  if (length < static_cast<std::size_t>(cfg.window_len)) {
    throw InvalidArgument("wave of " + std::to_string(length) +
                          " samples is shorter than one window (" +
                          std::to_string(cfg.window_len) + ")");
  }
  const int frames = frame_count(length, cfg);
  const auto window = make_window(cfg.window, cfg.window_len);
  Spectrogram spec(static_cast<int>(wave.channels()), frames, cfg, length,
                   wave.sample_rate);
  std::vector<double> buffer(static_cast<std::size_t>(cfg.window_len));
  for (int m = 0; m < spec.channels(); ++m) {
    for (int t = 0; t < frames; ++t) {
      const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
      for (int n = 0; n < cfg.window_len; ++n) {
        const std::size_t i = start + n;
        buffer[n] = i < length ? wave.samples(m, static_cast<Eigen::Index>(i)) * window[n]
                               : 0.0;
      }
      const auto bins = dsp::rfft(buffer, cfg.fft_size);
      for (int k = 0; k < spec.bins(); ++k) spec(m, t, k) = bins[k];
    }
  }
  return spec;
}

namespace {

// Accumulated squared synthesis window for each output sample.
std::vector<double> synthesis_norm(int frames, const StftConfig& cfg,
                                   const std::vector<double>& window) {
  const std::size_t span = static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.window_len;
  std::vector<double> norm(span, 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int n = 0; n < cfg.window_len; ++n) {
      norm[static_cast<std::size_t>(t) * cfg.hop + n] += window[n] * window[n];
    }
  }
  return norm;
}

}  // namespace

std::vector<double> synthesize_channel(std::span<const Complex> coeffs, int frames,
                                       const StftConfig& cfg,
                                       std::size_t original_length) {
  const int bins = cfg.num_bins();
  const auto window = make_window(cfg.window, cfg.window_len);
  const auto norm = synthesis_norm(frames, cfg, window);
  std::vector<double> out(std::max(norm.size(), original_length), 0.0);
  for (int t = 0; t < frames; ++t) {
    const auto frame = dsp::irfft(
        coeffs.subspan(static_cast<std::size_t>(t) * bins, static_cast<std::size_t>(bins)),
        cfg.fft_size);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n) out[start + n] += frame[n] * window[n];
  }
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm[i] > 0.0) out[i] /= norm[i];
  }
  out.resize(original_length);
  return out;
}

std::vector<Complex> synthesize_channel_adjoint(std::span<const double> grad, int frames,
                                                const StftConfig& cfg) {
  const int bins = cfg.num_bins();
  const int n_fft = cfg.fft_size;
  const auto window = make_window(cfg.window, cfg.window_len);
  const auto norm = synthesis_norm(frames, cfg, window);
  std::vector<Complex> out(static_cast<std::size_t>(frames) * bins);
  std::vector<double> h(static_cast<std::size_t>(cfg.window_len));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n) {
      const std::size_t i = start + n;
      const double g = i < grad.size() && norm[i] > 0.0 ? grad[i] / norm[i] : 0.0;
      h[n] = g * window[n];
    }
    const auto spectrum = dsp::rfft(h, n_fft);
    for (int k = 0; k < bins; ++k) {
      const bool edge = k == 0 || k == bins - 1;
      const double scale = (edge ? 1.0 : 2.0) / n_fft;
      Complex g = spectrum[k] * scale;
      if (edge) g.imag(0.0);
      out[static_cast<std::size_t>(t) * bins + k] = g;
    }
  }
  return out;
}

MultichannelWave istft(const Spectrogram& spec, std::size_t original_length) {
  spec.config().validate();
  MultichannelWave wave;
  wave.sample_rate = spec.sample_rate();
  wave.samples.resize(spec.channels(), static_cast<Eigen::Index>(original_length));
  const std::size_t per_channel = static_cast<std::size_t>(spec.frames()) * spec.bins();
  for (int m = 0; m < spec.channels(); ++m) {
    const auto channel = synthesize_channel(
        spec.data().subspan(m * per_channel, per_channel), spec.frames(), spec.config(),
        original_length);
    for (std::size_t i = 0; i < original_length; ++i) {
      wave.samples(m, static_cast<Eigen::Index>(i)) = channel[i];
    }
  }
  return wave;
}

}  // namespace beamkit
