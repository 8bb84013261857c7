#include "beamkit/beamform.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "beamkit/error.hpp"

namespace beamkit {

SteeringVector steering_vector(double theta_deg, double frequency_hz,
                               const ArrayGeometry& array, double speed_of_sound) {
  if (frequency_hz < 0.0) throw InvalidArgument("frequency must be non-negative");
  const auto x = axial_coordinates(array);
  const double cos_theta = std::cos(theta_deg * std::numbers::pi / 180.0);
  SteeringVector sv;
  sv.theta_deg = theta_deg;
  sv.frequency_hz = frequency_hz;
  sv.values.resize(static_cast<Eigen::Index>(x.size()));
  for (std::size_t m = 0; m < x.size(); ++m) {
    const double tau = x[m] * cos_theta / speed_of_sound;
    sv.values(static_cast<Eigen::Index>(m)) =
        std::polar(1.0, -2.0 * std::numbers::pi * frequency_hz * tau);
  }
  return sv;
}

PcaSteering pca_steering(const Eigen::MatrixXcd& phi_ss, int reference_mic) {
  if (phi_ss.rows() != phi_ss.cols() || phi_ss.rows() == 0) {
    throw InvalidArgument("covariance must be a non-empty square matrix");
  }
  if (reference_mic < 0 || reference_mic >= phi_ss.rows()) {
    throw InvalidArgument("reference mic out of range");
  }
  const Eigen::MatrixXcd herm = 0.5 * (phi_ss + phi_ss.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::Index m = herm.rows();
  const auto& values = solver.eigenvalues();  // ascending
  PcaSteering out;
  out.vector = solver.eigenvectors().col(m - 1);
  const double trace = herm.trace().real();
  const double gap = m > 1 ? values(m - 1) - values(m - 2) : values(0);
  out.degenerate = gap < 1e-9 * std::abs(trace);
  const Complex ref = out.vector(reference_mic);
  if (std::abs(ref) > 0.0) out.vector *= std::conj(ref) / std::abs(ref);
  out.vector.normalize();
  return out;
}

std::vector<Eigen::VectorXcd> pca_relative_steering(const CovarianceField& phi_ss,
                                                    int reference_mic) {
  if (phi_ss.framewise()) throw InvalidArgument("PCA steering expects utterance-level covariance");
  std::vector<Eigen::VectorXcd> out;
  out.reserve(static_cast<std::size_t>(phi_ss.bins()));
  for (int f = 0; f < phi_ss.bins(); ++f) {
    Eigen::VectorXcd v = pca_steering(phi_ss.at(f), reference_mic).vector;
    const double ref = v(reference_mic).real();
    if (ref > 1e-12) v /= ref;
    out.push_back(std::move(v));
  }
  return out;
}

Eigen::VectorXcd mvdr_weights(const Eigen::MatrixXcd& phi_nn, const Eigen::VectorXcd& steering,
                              double loading_factor) {
  const Eigen::Index m = phi_nn.rows();
  if (phi_nn.cols() != m || steering.size() != m || m == 0) {
    throw InvalidArgument("covariance and steering vector sizes disagree");
  }
  if (steering.squaredNorm() == 0.0) throw InvalidArgument("steering vector is zero");
  if (loading_factor < 0.0) throw InvalidArgument("loading factor must be non-negative");
  Eigen::MatrixXcd loaded = 0.5 * (phi_nn + phi_nn.adjoint());
  const double load = loading_factor * loaded.trace().real() / static_cast<double>(m);
  loaded.diagonal().array() += load;

  const Eigen::LDLT<Eigen::MatrixXcd> ldlt(loaded);
  // The rcond estimate alone misses exactly rank-deficient matrices whose
  // trailing pivots are rounding noise, so the pivot spread is checked too.
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14) ||
      !(pivots.minCoeff() > 1e-13 * pivots.maxCoeff())) {
    throw NumericError("noise covariance is singular even after diagonal loading");
  }
  const Eigen::VectorXcd num = ldlt.solve(steering);
  const Complex den = steering.dot(num);  // a^H Phi^-1 a
  if (!(std::abs(den) > 0.0) || !num.allFinite()) {
    throw NumericError("MVDR solve produced a degenerate denominator");
  }
  return num / den;
}

BeamWeights::BeamWeights(int frames, int bins, int mics)
    : frames_(frames),
      bins_(bins),
      mics_(mics),
      weights_(static_cast<std::size_t>(frames) * bins, Eigen::VectorXcd::Zero(mics)) {}

BeamWeights mvdr_weights(const CovarianceField& phi_nn,
                         const std::vector<Eigen::VectorXcd>& steering, double loading_factor) {
  if (phi_nn.framewise()) throw InvalidArgument("classical MVDR expects utterance-level covariance");
  if (static_cast<int>(steering.size()) != phi_nn.bins()) {
    throw InvalidArgument("one steering vector per bin is required");
  }
  BeamWeights weights(1, phi_nn.bins(), phi_nn.mics());
  for (int f = 0; f < phi_nn.bins(); ++f) {
    weights.at(0, f) = mvdr_weights(phi_nn.at(f), steering[static_cast<std::size_t>(f)],
                                    loading_factor);
  }
  return weights;
}

std::vector<Eigen::VectorXcd> steering_for_bins(double theta_deg, int bins, int fft_size,
                                                int sample_rate, const ArrayGeometry& array,
                                                double speed_of_sound) {
  std::vector<Eigen::VectorXcd> out;
  out.reserve(static_cast<std::size_t>(bins));
  for (int f = 0; f < bins; ++f) {
    const double hz = static_cast<double>(f) * sample_rate / fft_size;
    out.push_back(steering_vector(theta_deg, hz, array, speed_of_sound).values);
  }
  return out;
}

Spectrogram apply_beamformer(const BeamWeights& weights, const Spectrogram& spec) {
  if (weights.mics() != spec.channels() || weights.bins() != spec.bins()) {
    throw InvalidArgument("beam weights do not match the spectrogram's channels/bins");
  }
  if (!weights.time_invariant() && weights.frames() != spec.frames()) {
    throw InvalidArgument("beam weights do not match the spectrogram's frame count");
  }
  Spectrogram out(1, spec.frames(), spec.config(), spec.original_length(), spec.sample_rate());
  for (int t = 0; t < spec.frames(); ++t) {
    for (int f = 0; f < spec.bins(); ++f) {
      const Eigen::VectorXcd& w = weights.at(t, f);
      Complex acc{};
      for (int m = 0; m < spec.channels(); ++m) acc += std::conj(w(m)) * spec(m, t, f);
      out(0, t, f) = acc;
    }
  }
  return out;
}

BeamPattern beam_pattern(const BeamWeights& weights, const ArrayGeometry& array,
                         std::span<const double> angle_grid, std::span<const int> bins,
                         double bin_hz, double speed_of_sound) {
  if (angle_grid.empty()) throw InvalidArgument("beam pattern needs a non-empty angle grid");
  if (bins.empty()) throw InvalidArgument("beam pattern needs at least one frequency bin");
  for (double a : angle_grid) {
    if (a < 0.0 || a > 180.0) throw InvalidArgument("angles must lie in [0, 180] degrees");
  }
  for (int b : bins) {
    if (b < 0 || b >= weights.bins()) throw InvalidArgument("bin index out of range");
  }
  BeamPattern pattern;
  pattern.angle_grid.assign(angle_grid.begin(), angle_grid.end());
  pattern.gains = Eigen::MatrixXd::Zero(weights.frames(), static_cast<Eigen::Index>(angle_grid.size()));
  for (std::size_t a = 0; a < angle_grid.size(); ++a) {
    for (int b : bins) {
      const Eigen::VectorXcd steer =
          steering_vector(angle_grid[a], b * bin_hz, array, speed_of_sound).values;
      if (steer.size() != weights.mics()) {
        throw InvalidArgument("array geometry does not match the weight dimension");
      }
      for (int t = 0; t < weights.frames(); ++t) {
        pattern.gains(t, static_cast<Eigen::Index>(a)) += std::abs(weights.at(t, b).dot(steer));
      }
    }
  }
  pattern.gains /= static_cast<double>(bins.size());
  return pattern;
}

BeamPattern segment_average(const BeamPattern& pattern, std::span<const std::pair<int, int>> ranges) {
  BeamPattern out;
  out.angle_grid = pattern.angle_grid;
  out.gains.resize(static_cast<Eigen::Index>(ranges.size()), pattern.gains.cols());
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    const auto [begin, end] = ranges[s];
    if (begin < 0 || end > pattern.gains.rows() || begin >= end) {
      throw InvalidArgument("invalid frame range for segment " + std::to_string(s));
    }
    out.gains.row(static_cast<Eigen::Index>(s)) =
        pattern.gains.middleRows(begin, end - begin).colwise().mean();
  }
  return out;
}

BeamPattern segment_average(const BeamPattern& pattern, int segments) {
  const auto frames = static_cast<int>(pattern.gains.rows());
  if (segments <= 0 || segments > frames) {
    throw InvalidArgument("segment count must lie in [1, frames]");
  }
  std::vector<std::pair<int, int>> ranges;
  for (int s = 0; s < segments; ++s) {
    ranges.emplace_back(s * frames / segments, (s + 1) * frames / segments);
  }
  return segment_average(pattern, ranges);
}

void write_beam_pattern_csv(const std::filesystem::path& path, const BeamPattern& pattern) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  for (std::size_t a = 0; a < pattern.angle_grid.size(); ++a) {
    out << (a ? "," : "") << pattern.angle_grid[a];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < pattern.gains.rows(); ++r) {
    for (Eigen::Index c = 0; c < pattern.gains.cols(); ++c) {
      out << (c ? "," : "") << pattern.gains(r, c);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace beamkit
