#include "beamkit/features.hpp"

#include <cmath>
#include <numbers>

#include "beamkit/error.hpp"

namespace beamkit {

namespace {

void check_channel(const Spectrogram& spec, int m) {
  if (m < 0 || m >= spec.channels()) {
    throw InvalidArgument("channel " + std::to_string(m) + " out of range");
  }
}

void check_pairs(const Spectrogram& spec, std::span<const MicPair> pairs) {
  for (const auto& [i, j] : pairs) {
    check_channel(spec, i);
    check_channel(spec, j);
    if (i == j) throw InvalidArgument("pair uses the same channel twice");
  }
}

// Phase difference angle(a) - angle(b); zero bins have phase 0.
double phase_difference(const Complex& a, const Complex& b) {
  const double pa = a == Complex{} ? 0.0 : std::arg(a);
  const double pb = b == Complex{} ? 0.0 : std::arg(b);
  return pa - pb;
}

}  // namespace

FeaturePlane magnitude_ref(const Spectrogram& spec, int reference_mic) {
  check_channel(spec, reference_mic);
  FeaturePlane out(spec.bins(), spec.frames());
  for (int t = 0; t < spec.frames(); ++t)
    for (int f = 0; f < spec.bins(); ++f) out(f, t) = std::abs(spec(reference_mic, t, f));
  return out;
}

std::vector<FeaturePlane> cos_ipd(const Spectrogram& spec, std::span<const MicPair> pairs) {
  check_pairs(spec, pairs);
  std::vector<FeaturePlane> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    FeaturePlane plane(spec.bins(), spec.frames());
    for (int t = 0; t < spec.frames(); ++t) {
      for (int f = 0; f < spec.bins(); ++f) {
        const Complex a = spec(i, t, f);
        const Complex b = spec(j, t, f);
        plane(f, t) = (a == Complex{} || b == Complex{}) ? 1.0
                                                           : std::cos(phase_difference(a, b));
      }
    }
    out.push_back(std::move(plane));
  }
  return out;
}

FeaturePlane angle_feature(const Spectrogram& spec, std::span<const MicPair> pairs,
                           double theta_deg, const ArrayGeometry& array,
                           double speed_of_sound) {
  if (theta_deg < 0.0 || theta_deg > 180.0) {
    throw InvalidArgument("theta must lie in [0, 180] degrees");
  }
  if (pairs.empty()) throw InvalidArgument("angle feature needs at least one pair");
  check_pairs(spec, pairs);
  const auto x = axial_coordinates(array);
  if (static_cast<int>(x.size()) < spec.channels()) {
    throw InvalidArgument("array has fewer mics than the spectrogram has channels");
  }
  const double cos_theta = std::cos(theta_deg * std::numbers::pi / 180.0);
  const double inv_p = 1.0 / static_cast<double>(pairs.size());

  FeaturePlane out = FeaturePlane::Zero(spec.bins(), spec.frames());
  for (const auto& [i, j] : pairs) {
    const double spacing = x[j] - x[i];
    for (int f = 0; f < spec.bins(); ++f) {
      const double expected =
          2.0 * std::numbers::pi * spec.bin_frequency(f) * spacing * cos_theta / speed_of_sound;
      for (int t = 0; t < spec.frames(); ++t) {
        out(f, t) += inv_p * std::cos(phase_difference(spec(i, t, f), spec(j, t, f)) - expected);
      }
    }
  }
  return out;
}

FeatureStack stack_features(FeaturePlane magnitude, std::vector<FeaturePlane> ipd,
                            FeaturePlane af, std::vector<MicPair> pairs, double target_doa) {
  if (ipd.size() != pairs.size()) {
    throw InvalidArgument("cosIPD plane count does not match the pair list");
  }
  const Eigen::Index rows = magnitude.rows();
  const Eigen::Index cols = magnitude.cols();
  auto check = [&](const FeaturePlane& p, const std::string& name) {
    if (p.rows() != rows || p.cols() != cols) {
      throw InvalidArgument("feature plane '" + name + "' has shape " +
                            std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                            ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  };
  FeatureStack stack;
  stack.pairs = std::move(pairs);
  stack.target_doa = target_doa;
  stack.names.push_back("magnitude");
  stack.planes.push_back(std::move(magnitude));
  for (std::size_t p = 0; p < ipd.size(); ++p) {
    const auto name = "cos_ipd_" + std::to_string(stack.pairs[p].first) + "_" +
                      std::to_string(stack.pairs[p].second);
    check(ipd[p], name);
    stack.names.push_back(name);
    stack.planes.push_back(std::move(ipd[p]));
  }
  check(af, "angle_feature");
  stack.names.push_back("angle_feature");
  stack.planes.push_back(std::move(af));
  return stack;
}

FeatureStack compute_features(const Spectrogram& spec, const ArrayGeometry& array,
                              double target_doa, double speed_of_sound) {
  return stack_features(magnitude_ref(spec, array.reference_mic), cos_ipd(spec, array.pairs),
                        angle_feature(spec, array.pairs, target_doa, array, speed_of_sound),
                        array.pairs, target_doa);
}

}  // namespace beamkit
