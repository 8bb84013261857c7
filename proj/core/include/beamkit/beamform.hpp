#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "beamkit/masks_cov.hpp"
#include "beamkit/room_sim.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit {

/// Relative diagonal loading used when none is given: the loading added is
/// factor * trace(Phi) / M.
inline constexpr double kDefaultLoading = 1e-6;

struct SteeringVector {
  Eigen::VectorXcd values;
  double theta_deg = 0.0;
  double frequency_hz = 0.0;
};

/// Far-field steering vector, element m = exp(-j 2 pi f tau_m) with
/// tau_m = x_m cos(theta) / c and x_m the axial coordinate relative to the
/// reference mic.
SteeringVector steering_vector(double theta_deg, double frequency_hz,
                               const ArrayGeometry& array, double speed_of_sound = kSpeedOfSound);

struct PcaSteering {
  Eigen::VectorXcd vector;  // unit norm, reference element real and >= 0
  bool degenerate = false;  // top eigenvalue gap < 1e-9 * trace
};

/// Principal eigenvector of a Hermitian PSD matrix.
PcaSteering pca_steering(const Eigen::MatrixXcd& phi_ss, int reference_mic = 0);

/// Per-bin PCA steering rescaled to a relative transfer function (reference
/// element exactly 1). Bins whose reference element vanishes fall back to the
/// unit-norm vector.
std::vector<Eigen::VectorXcd> pca_relative_steering(const CovarianceField& phi_ss,
                                                    int reference_mic = 0);

/// w = Phi~^-1 a / (a^H Phi~^-1 a) with Phi~ = Phi + loading * (tr(Phi)/M) I,
/// solved with a Hermitian LDL^T factorization.
Eigen::VectorXcd mvdr_weights(const Eigen::MatrixXcd& phi_nn, const Eigen::VectorXcd& steering,
                              double loading_factor = kDefaultLoading);

/// Beamformer weights over (frame, bin). A single-frame set is broadcast
/// over time.
class BeamWeights {
 public:
  BeamWeights() = default;
  BeamWeights(int frames, int bins, int mics);

  int frames() const { return frames_; }
  int bins() const { return bins_; }
  int mics() const { return mics_; }
  bool time_invariant() const { return frames_ == 1; }

  Eigen::VectorXcd& at(int frame, int bin) { return weights_[slot(frame, bin)]; }
  const Eigen::VectorXcd& at(int frame, int bin) const { return weights_[slot(frame, bin)]; }

 private:
  std::size_t slot(int frame, int bin) const {
    return static_cast<std::size_t>(frames_ == 1 ? 0 : frame) * bins_ + bin;
  }
  int frames_ = 0;
  int bins_ = 0;
  int mics_ = 0;
  std::vector<Eigen::VectorXcd> weights_;
};

/// Time-invariant MVDR weights for every bin of an utterance-level noise
/// covariance.
BeamWeights mvdr_weights(const CovarianceField& phi_nn,
                         const std::vector<Eigen::VectorXcd>& steering,
                         double loading_factor = kDefaultLoading);

/// Steering vectors toward `theta_deg` for every bin of `spec`'s grid.
std::vector<Eigen::VectorXcd> steering_for_bins(double theta_deg, int bins, int fft_size,
                                                int sample_rate, const ArrayGeometry& array,
                                                double speed_of_sound = kSpeedOfSound);

/// X(t,f) = w(t,f)^H y(t,f), returned as a one-channel spectrogram.
Spectrogram apply_beamformer(const BeamWeights& weights, const Spectrogram& spec);

struct BeamPattern {
  Eigen::MatrixXd gains;  // rows: frames or segments, cols: angles
  std::vector<double> angle_grid;
};

/// gain(theta, t) = mean over `bins` of |w(t,f)^H a(theta,f)|; `bin_hz` maps
/// a bin index to Hz.
BeamPattern beam_pattern(const BeamWeights& weights, const ArrayGeometry& array,
                         std::span<const double> angle_grid, std::span<const int> bins,
                         double bin_hz, double speed_of_sound = kSpeedOfSound);

/// Averages consecutive frame rows into `segments` equal segments, or into
/// the explicit [begin, end) frame ranges.
BeamPattern segment_average(const BeamPattern& pattern, int segments);
BeamPattern segment_average(const BeamPattern& pattern,
                            std::span<const std::pair<int, int>> frame_ranges);

/// CSV: header row of angles, then one row of linear gains per segment.
void write_beam_pattern_csv(const std::filesystem::path& path, const BeamPattern& pattern);

}  // namespace beamkit
