#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace beamkit {

using Complex = std::complex<double>;

/// Time-domain multichannel audio. Rows are channels, columns are samples.
struct MultichannelWave {
  Eigen::MatrixXd samples;
  int sample_rate = 16000;

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }

  /// Throws InvalidArgument for an empty wave, a non-positive rate or
  /// non-finite samples.
  void validate() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads a RIFF/WAVE file (16-bit PCM or 32-bit IEEE float, any channel
/// count). Samples are scaled to [-1, 1].
MultichannelWave read_wav(const std::filesystem::path& path);

/// Writes `wave` to `path`. Samples outside [-1, 1] are rejected rather than
/// clipped.
void write_wav(const std::filesystem::path& path, const MultichannelWave& wave,
               WavEncoding encoding = WavEncoding::kPcm16);

enum class WindowKind { kSqrtHann, kHann, kRectangular };

struct StftConfig {
  int window_len = 512;
  int hop = 256;
  int fft_size = 512;
  WindowKind window = WindowKind::kSqrtHann;

  int num_bins() const { return fft_size / 2 + 1; }

  /// Checks hop <= window_len <= fft_size, a power-of-two FFT size and the
  /// constant-overlap-add condition for the analysis/synthesis pair.
  void validate() const;
};

/// Analysis (and synthesis) taper. The Hann variants are sampled at half
/// sample offsets so that no tap is exactly zero.
std::vector<double> make_window(WindowKind kind, int length);

/// True when sum_k w^2[n + k*hop] is constant over n.
bool satisfies_cola(const StftConfig& cfg);

/// Complex STFT coefficients laid out as (channel, frame, bin).
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(int channels, int frames, const StftConfig& cfg,
              std::size_t original_length, int sample_rate);

  int channels() const { return channels_; }
  int frames() const { return frames_; }
  int bins() const { return bins_; }
  const StftConfig& config() const { return config_; }
  std::size_t original_length() const { return original_length_; }
  int sample_rate() const { return sample_rate_; }

  /// Centre frequency of bin `k` in Hz.
  double bin_frequency(int k) const {
    return static_cast<double>(k) * sample_rate_ / config_.fft_size;
  }

  Complex& operator()(int channel, int frame, int bin) {
    return data_[index(channel, frame, bin)];
  }
  const Complex& operator()(int channel, int frame, int bin) const {
    return data_[index(channel, frame, bin)];
  }

  std::span<Complex> data() { return data_; }
  std::span<const Complex> data() const { return data_; }

  /// Contiguous bins of one (channel, frame).
  std::span<const Complex> frame(int channel, int frame) const {
    return {data_.data() + index(channel, frame, 0),
            static_cast<std::size_t>(bins_)};
  }

  /// Copy of a single channel as a one-channel spectrogram.
  Spectrogram channel(int channel) const;

  /// Multichannel vector y(t, f).
  Eigen::VectorXcd snapshot(int frame, int bin) const;

  bool same_shape(const Spectrogram& other) const {
    return channels_ == other.channels_ && frames_ == other.frames_ &&
           bins_ == other.bins_;
  }

 private:
  std::size_t index(int channel, int frame, int bin) const {
    return (static_cast<std::size_t>(channel) * frames_ + frame) * bins_ + bin;
  }

  int channels_ = 0;
  int frames_ = 0;
  int bins_ = 0;
  StftConfig config_;
  std::size_t original_length_ = 0;
  int sample_rate_ = 16000;
  std::vector<Complex> data_;
};

/// Number of frames produced for a signal of `length` samples:
/// 1 + ceil((length - window_len) / hop).
int frame_count(std::size_t length, const StftConfig& cfg);

Spectrogram stft(const MultichannelWave& wave, const StftConfig& cfg);

/// Overlap-add inverse. Output has `original_length` samples.
MultichannelWave istft(const Spectrogram& spec, std::size_t original_length);

/// Single-channel synthesis on a (frames x bins) coefficient block. Used by
/// the differentiable ISTFT, whose backward pass is
/// `synthesize_channel_adjoint`.
std::vector<double> synthesize_channel(std::span<const Complex> coeffs,
                                       int frames, const StftConfig& cfg,
                                       std::size_t original_length);

/// Transpose of `synthesize_channel` viewed as a real-linear map from
/// (Re, Im) coefficients to samples. Imaginary parts of the DC and Nyquist
/// bins do not influence synthesis and receive zero gradient.
std::vector<Complex> synthesize_channel_adjoint(std::span<const double> grad,
                                                int frames,
                                                const StftConfig& cfg);

}  // namespace beamkit
