#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "beamkit/room_sim.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit {

/// Real plane indexed (bin, frame).
using FeaturePlane = Eigen::MatrixXd;

/// |Y_ref(t, f)| as a (bins x frames) plane.
FeaturePlane magnitude_ref(const Spectrogram& spec, int reference_mic);

/// cos(angle(Y_i) - angle(Y_j)) for every pair. A bin where either channel is
/// exactly zero yields 1.
std::vector<FeaturePlane> cos_ipd(const Spectrogram& spec, std::span<const MicPair> pairs);

/// Target angle feature, averaged over pairs so a perfect match gives 1:
///   AF(t,f) = (1/P) sum_p cos(IPD_p(t,f) - 2 pi f d_p cos(theta) / c)
/// with d_p the signed axial spacing x_j - x_i of pair p.
FeaturePlane angle_feature(const Spectrogram& spec, std::span<const MicPair> pairs,
                           double theta_deg, const ArrayGeometry& array,
                           double speed_of_sound = kSpeedOfSound);

struct FeatureStack {
  std::vector<FeaturePlane> planes;  // [magnitude, cosIPD..., AF]
  std::vector<std::string> names;
  std::vector<MicPair> pairs;
  double target_doa = 0.0;

  int num_planes() const { return static_cast<int>(planes.size()); }
  int bins() const { return planes.empty() ? 0 : static_cast<int>(planes.front().rows()); }
  int frames() const { return planes.empty() ? 0 : static_cast<int>(planes.front().cols()); }
};

/// Stacks planes in the order magnitude, cosIPD (pair order), AF.
FeatureStack stack_features(FeaturePlane magnitude, std::vector<FeaturePlane> ipd,
                            FeaturePlane af, std::vector<MicPair> pairs, double target_doa);

/// Convenience: all of the above from a mixture spectrogram.
FeatureStack compute_features(const Spectrogram& spec, const ArrayGeometry& array,
                              double target_doa, double speed_of_sound = kSpeedOfSound);

}  // namespace beamkit
