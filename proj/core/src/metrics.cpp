#include "beamkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Core>
#include <json.hpp>

#include "beamkit/error.hpp"
#include "dsp.hpp"

namespace beamkit {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw InvalidArgument("SI-SDR inputs differ in length");
  }
  const double ref_energy = std::inner_product(reference.begin(), reference.end(), reference.begin(), 0.0);
  if (!(ref_energy > 0.0)) throw InvalidArgument("SI-SDR reference has zero energy");
  const double scale =
      std::inner_product(estimate.begin(), estimate.end(), reference.begin(), 0.0) / ref_energy;
  double target = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = scale * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    error += e * e;
  }
  if (target == 0.0) return -kSiSdrCap;
  if (error == 0.0) return kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / error), -kSiSdrCap, kSiSdrCap);
}

namespace {

constexpr int kBands = 15;
constexpr double kMinBandHz = 150.0;
constexpr int kSegmentFrames = 30;
constexpr double kClipDb = -15.0;
constexpr double kDynamicRangeDb = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

struct StoiGrid {
  int frame_len;
  int hop;
  int n_fft;
};

StoiGrid grid_for(int sample_rate) {
  const int frame_len = static_cast<int>(std::lround(0.0256 * sample_rate));
  return {frame_len, frame_len / 2, dsp::next_pow2(static_cast<std::size_t>(2 * frame_len))};
}

std::vector<double> hann(int n) {
  // Symmetric Hann without the zero endpoints, as used by the reference STOI.
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  return w;
}

// Drops frames more than kDynamicRangeDb below the loudest reference frame and
// resynthesizes both signals by overlap-add of the kept windowed frames.
std::pair<std::vector<double>, std::vector<double>> remove_silent_frames(
    std::span<const double> x, std::span<const double> y, const StoiGrid& g) {
  const auto w = hann(g.frame_len);
  const std::size_t n = x.size();
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + g.frame_len <= n; s += static_cast<std::size_t>(g.hop)) starts.push_back(s);
  std::vector<double> energy_db(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    double e = 0.0;
    for (int i = 0; i < g.frame_len; ++i) {
      const double v = w[i] * x[starts[k] + i];
      e += v * v;
    }
    energy_db[k] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double peak = energy_db.empty() ? 0.0 : *std::max_element(energy_db.begin(), energy_db.end());
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (energy_db[k] - peak + kDynamicRangeDb > 0.0) kept.push_back(starts[k]);
  }
  const std::size_t out_len =
      kept.empty() ? 0 : (kept.size() - 1) * static_cast<std::size_t>(g.hop) + g.frame_len;
  std::vector<double> xo(out_len, 0.0);
  std::vector<double> yo(out_len, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const std::size_t at = k * static_cast<std::size_t>(g.hop);
    for (int i = 0; i < g.frame_len; ++i) {
      xo[at + i] += w[i] * x[kept[k] + i];
      yo[at + i] += w[i] * y[kept[k] + i];
    }
  }
  return {xo, yo};
}

// One-third-octave band envelopes, (bands x frames).
Eigen::MatrixXd band_envelopes(const std::vector<double>& signal, const StoiGrid& g,
                               int sample_rate) {
  const auto w = hann(g.frame_len);
  const int bins = g.n_fft / 2 + 1;
  std::vector<std::pair<int, int>> band_bins;
  for (int b = 0; b < kBands; ++b) {
    const double lo = kMinBandHz * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    const double hi = kMinBandHz * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    auto nearest = [&](double hz) {
      return std::clamp(static_cast<int>(std::lround(hz * g.n_fft / sample_rate)), 0, bins);
    };
    band_bins.emplace_back(nearest(lo), nearest(hi));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + g.frame_len <= signal.size(); s += static_cast<std::size_t>(g.hop)) {
    starts.push_back(s);
  }
  Eigen::MatrixXd env(kBands, static_cast<Eigen::Index>(starts.size()));
  std::vector<double> frame(static_cast<std::size_t>(g.frame_len));
  for (std::size_t k = 0; k < starts.size(); ++k) {
    for (int i = 0; i < g.frame_len; ++i) frame[i] = w[i] * signal[starts[k] + i];
    const auto spec = dsp::rfft(frame, g.n_fft);
    for (int b = 0; b < kBands; ++b) {
      double e = 0.0;
      for (int f = band_bins[b].first; f < band_bins[b].second; ++f) e += std::norm(spec[f]);
      env(b, static_cast<Eigen::Index>(k)) = std::sqrt(e);
    }
  }
  return env;
}

}  // namespace

double stoi(std::span<const double> estimate, std::span<const double> reference,
            int sample_rate) {
  if (estimate.size() != reference.size()) throw InvalidArgument("STOI inputs differ in length");
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const StoiGrid g = grid_for(sample_rate);
  const auto [x, y] = remove_silent_frames(reference, estimate, g);
  const Eigen::MatrixXd xe = band_envelopes(x, g, sample_rate);
  const Eigen::MatrixXd ye = band_envelopes(y, g, sample_rate);
  const auto frames = static_cast<int>(xe.cols());
  if (frames < kSegmentFrames) {
    throw InvalidArgument("STOI needs at least " + std::to_string(kSegmentFrames) +
                          " non-silent frames (about 384 ms), got " + std::to_string(frames));
  }
  const double clip = 1.0 + std::pow(10.0, -kClipDb / 20.0);
  double total = 0.0;
  int count = 0;
  for (int end = kSegmentFrames; end <= frames; ++end) {
    const int begin = end - kSegmentFrames;
    for (int b = 0; b < kBands; ++b) {
      Eigen::VectorXd xs = xe.row(b).segment(begin, kSegmentFrames).transpose();
      Eigen::VectorXd ys = ye.row(b).segment(begin, kSegmentFrames).transpose();
      const double alpha = xs.norm() / (ys.norm() + kEps);
      ys = (alpha * ys).cwiseMin(clip * xs);
      xs.array() -= xs.mean();
      ys.array() -= ys.mean();
      xs /= xs.norm() + kEps;
      ys /= ys.norm() + kEps;
      total += xs.dot(ys);
      ++count;
    }
  }
  return std::clamp(total / count, 0.0, 1.0);
}

double MetricReport::mean_si_sdr() const {
  if (utterances.empty()) return 0.0;
  double s = 0.0;
  for (const auto& u : utterances) s += u.si_sdr_db;
  return s / static_cast<double>(utterances.size());
}

double MetricReport::mean_stoi() const {
  if (utterances.empty()) return 0.0;
  double s = 0.0;
  for (const auto& u : utterances) s += u.stoi;
  return s / static_cast<double>(utterances.size());
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,si_sdr_db,stoi\n" << std::setprecision(10);
  for (const auto& u : utterances) out << u.id << ',' << u.si_sdr_db << ',' << u.stoi << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  const nlohmann::json doc = {{"count", utterances.size()},
                              {"mean_si_sdr_db", mean_si_sdr()},
                              {"mean_stoi", mean_stoi()},
                              {"pesq", "not computed"}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace beamkit
