#pragma once

#include <vector>

#include <Eigen/Core>

#include "beamkit/signal_io.hpp"

namespace beamkit {

/// Magnitude bound applied to complex ratio masks.
inline constexpr double kCrmBound = 10.0;

/// Real ratio mask, (bins x frames), values in [0, 1].
struct RealMask {
  Eigen::MatrixXd values;
};

/// Complex ratio mask, (bins x frames).
struct ComplexMask {
  Eigen::MatrixXcd values;
};

/// |X| / |Y| on the reference channel, clamped to [0, 1]; 0 where |Y| = 0.
RealMask oracle_irm(const Spectrogram& target, const Spectrogram& mix, int reference_mic = 0);

/// X / Y on the reference channel with magnitude clipped to `bound` (phase
/// kept); 0 where Y = 0.
ComplexMask oracle_crm(const Spectrogram& target, const Spectrogram& mix,
                       int reference_mic = 0, double bound = kCrmBound);

/// Applies one mask to every channel of `spec`.
Spectrogram apply_mask(const RealMask& mask, const Spectrogram& spec);
Spectrogram apply_mask(const ComplexMask& mask, const Spectrogram& spec);

enum class CovarianceKind { kSpeech, kNoise };

/// Hermitian MxM matrices, one per bin (utterance level, frames() == 0) or
/// one per (frame, bin).
class CovarianceField {
 public:
  CovarianceField() = default;
  CovarianceField(int frames, int bins, int mics, CovarianceKind kind);

  bool framewise() const { return frames_ > 0; }
  int frames() const { return frames_; }
  int bins() const { return bins_; }
  int mics() const { return mics_; }
  CovarianceKind kind() const { return kind_; }

  Eigen::MatrixXcd& at(int bin) { return matrices_[static_cast<std::size_t>(bin)]; }
  const Eigen::MatrixXcd& at(int bin) const { return matrices_[static_cast<std::size_t>(bin)]; }
  Eigen::MatrixXcd& at(int frame, int bin) { return matrices_[slot(frame, bin)]; }
  const Eigen::MatrixXcd& at(int frame, int bin) const { return matrices_[slot(frame, bin)]; }

  const std::vector<Eigen::MatrixXcd>& matrices() const { return matrices_; }

 private:
  std::size_t slot(int frame, int bin) const {
    return static_cast<std::size_t>(frame) * bins_ + bin;
  }
  int frames_ = 0;
  int bins_ = 0;
  int mics_ = 0;
  CovarianceKind kind_ = CovarianceKind::kSpeech;
  std::vector<Eigen::MatrixXcd> matrices_;
};

/// Phi(f) = sum_t M^2 y y^H / sum_t M^2, Hermitian-symmetrized. Throws
/// InvalidArgument naming the bin if the mask is zero over all frames there.
CovarianceField covariance_utterance(const RealMask& mask, const Spectrogram& mix,
                                     CovarianceKind kind = CovarianceKind::kSpeech);

/// Rank-1 outer product x x^H for every (frame, bin) of a masked spectrogram.
CovarianceField covariance_framewise(const Spectrogram& masked,
                                     CovarianceKind kind = CovarianceKind::kSpeech);

}  // namespace beamkit
