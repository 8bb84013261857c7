#include "beamkit/masks_cov.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beamkit/error.hpp"

namespace beamkit {

namespace {

void check_pair(const Spectrogram& a, const Spectrogram& b, int ref) {
  if (a.frames() != b.frames() || a.bins() != b.bins()) {
    throw InvalidArgument("spectrogram shapes differ");
  }
  if (ref < 0 || ref >= a.channels() || ref >= b.channels()) {
    throw InvalidArgument("reference channel out of range");
  }
}

void check_mask(Eigen::Index rows, Eigen::Index cols, const Spectrogram& spec) {
  if (rows != spec.bins() || cols != spec.frames()) {
    throw InvalidArgument("mask shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " does not match spectrogram " + std::to_string(spec.bins()) + "x" +
                          std::to_string(spec.frames()));
  }
}

}  // namespace

RealMask oracle_irm(const Spectrogram& target, const Spectrogram& mix, int reference_mic) {
  check_pair(target, mix, reference_mic);
  RealMask mask{Eigen::MatrixXd::Zero(mix.bins(), mix.frames())};
  for (int t = 0; t < mix.frames(); ++t) {
    for (int f = 0; f < mix.bins(); ++f) {
      const double y = std::abs(mix(reference_mic, t, f));
      if (y == 0.0) continue;
      mask.values(f, t) = std::clamp(std::abs(target(reference_mic, t, f)) / y, 0.0, 1.0);
    }
  }
  return mask;
}

ComplexMask oracle_crm(const Spectrogram& target, const Spectrogram& mix, int reference_mic,
                       double bound) {
  check_pair(target, mix, reference_mic);
  ComplexMask mask{Eigen::MatrixXcd::Zero(mix.bins(), mix.frames())};
  for (int t = 0; t < mix.frames(); ++t) {
    for (int f = 0; f < mix.bins(); ++f) {
      const Complex y = mix(reference_mic, t, f);
      if (y == Complex{}) continue;
      Complex ratio = target(reference_mic, t, f) / y;
      const double mag = std::abs(ratio);
      if (mag > bound) ratio *= bound / mag;
      mask.values(f, t) = ratio;
    }
  }
  return mask;
}

Spectrogram apply_mask(const RealMask& mask, const Spectrogram& spec) {
  check_mask(mask.values.rows(), mask.values.cols(), spec);
  Spectrogram out = spec;
  for (int m = 0; m < spec.channels(); ++m)
    for (int t = 0; t < spec.frames(); ++t)
      for (int f = 0; f < spec.bins(); ++f) out(m, t, f) *= mask.values(f, t);
  return out;
}

Spectrogram apply_mask(const ComplexMask& mask, const Spectrogram& spec) {
  check_mask(mask.values.rows(), mask.values.cols(), spec);
  Spectrogram out = spec;
  for (int m = 0; m < spec.channels(); ++m)
    for (int t = 0; t < spec.frames(); ++t)
      for (int f = 0; f < spec.bins(); ++f) out(m, t, f) *= mask.values(f, t);
  return out;
}

CovarianceField::CovarianceField(int frames, int bins, int mics, CovarianceKind kind)
    : frames_(frames),
      bins_(bins),
      mics_(mics),
      kind_(kind),
      matrices_(static_cast<std::size_t>(std::max(frames, 1)) * bins,
                Eigen::MatrixXcd::Zero(mics, mics)) {}

CovarianceField covariance_utterance(const RealMask& mask, const Spectrogram& mix,
                                     CovarianceKind kind) {
  check_mask(mask.values.rows(), mask.values.cols(), mix);
  CovarianceField field(0, mix.bins(), mix.channels(), kind);
  for (int f = 0; f < mix.bins(); ++f) {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(mix.channels(), mix.channels());
    double weight = 0.0;
    for (int t = 0; t < mix.frames(); ++t) {
      const double w = mask.values(f, t) * mask.values(f, t);
      if (w == 0.0) continue;
      const Eigen::VectorXcd y = mix.snapshot(t, f);
      acc.noalias() += w * (y * y.adjoint());
      weight += w;
    }
    if (!(weight > 0.0)) {
      throw InvalidArgument("mask is zero over all frames at frequency bin " + std::to_string(f));
    }
    acc /= weight;
    field.at(f) = 0.5 * (acc + acc.adjoint());
  }
  return field;
}

CovarianceField covariance_framewise(const Spectrogram& masked, CovarianceKind kind) {
  CovarianceField field(masked.frames(), masked.bins(), masked.channels(), kind);
  for (int t = 0; t < masked.frames(); ++t) {
    for (int f = 0; f < masked.bins(); ++f) {
      const Eigen::VectorXcd x = masked.snapshot(t, f);
      field.at(t, f) = x * x.adjoint();
    }
  }
  return field;
}

}  // namespace beamkit
