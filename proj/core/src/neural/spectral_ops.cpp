#include "beamkit/neural/spectral_ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "beamkit/error.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/neural/ops.hpp"

namespace beamkit::nn {

namespace {

double* grad_of(Node& self, std::size_t i) {
  Node& n = *self.inputs[i];
  return n.requires_grad ? n.ensure_grad().data() : nullptr;
}

}  // namespace

Tensor spectrogram_tensor(const Spectrogram& spec) {
  const int T = spec.frames(), F = spec.bins(), M = spec.channels();
  std::vector<double> v(static_cast<std::size_t>(T) * F * M * 2);
  std::size_t i = 0;
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f)
      for (int m = 0; m < M; ++m) {
        v[i++] = spec(m, t, f).real();
        v[i++] = spec(m, t, f).imag();
      }
  return Tensor::constant({T, F, M, 2}, std::move(v));
}

Tensor channel_tensor(const Spectrogram& spec, int channel) {
  if (channel < 0 || channel >= spec.channels()) {
    throw InvalidArgument("channel_tensor: channel " + std::to_string(channel) + " out of range");
  }
  const int T = spec.frames(), F = spec.bins();
  std::vector<double> v(static_cast<std::size_t>(T) * F * 2);
  std::size_t i = 0;
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      v[i++] = spec(channel, t, f).real();
      v[i++] = spec(channel, t, f).imag();
    }
  return Tensor::constant({T, F, 2}, std::move(v));
}

Tensor complex_mask_apply(const Tensor& mask, const Spectrogram& spec) {
  const int T = spec.frames(), F = spec.bins(), M = spec.channels();
  if (mask.shape() != Shape{2, F, T}) {
    throw InvalidArgument("complex_mask_apply: mask " + shape_string(mask.shape()) +
                          " does not match spectrogram grid [2, " + std::to_string(F) + ", " +
                          std::to_string(T) + "]");
  }
  const auto mv = mask.values();
  const std::size_t plane = static_cast<std::size_t>(F) * T;
  std::vector<double> v(static_cast<std::size_t>(T) * F * M * 2);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      const double mr = mv[static_cast<std::size_t>(f) * T + t];
      const double mi = mv[plane + static_cast<std::size_t>(f) * T + t];
      for (int m = 0; m < M; ++m) {
        const Complex y = spec(m, t, f);
        const std::size_t o = ((static_cast<std::size_t>(t) * F + f) * M + m) * 2;
        v[o] = mr * y.real() - mi * y.imag();
        v[o + 1] = mr * y.imag() + mi * y.real();
      }
    }
  // The spectrogram is copied so the closure does not outlive its owner.
  auto held = std::make_shared<Spectrogram>(spec);
  return make_result("complex_mask_apply", {T, F, M, 2}, std::move(v), {mask},
                     [held, T, F, M, plane](Node& s) {
                       double* g = grad_of(s, 0);
                       if (!g) return;
                       for (int t = 0; t < T; ++t)
                         for (int f = 0; f < F; ++f) {
                           double gr_sum = 0.0, gi_sum = 0.0;
                           for (int m = 0; m < M; ++m) {
                             const Complex y = (*held)(m, t, f);
                             const std::size_t o = ((static_cast<std::size_t>(t) * F + f) * M + m) * 2;
                             const double gr = s.grad[o], gi = s.grad[o + 1];
                             gr_sum += gr * y.real() + gi * y.imag();
                             gi_sum += -gr * y.imag() + gi * y.real();
                           }
                           g[static_cast<std::size_t>(f) * T + t] += gr_sum;
                           g[plane + static_cast<std::size_t>(f) * T + t] += gi_sum;
                         }
                     });
}

Tensor outer_product_features(const Tensor& x) {
  if (x.rank() != 4 || x.dim(3) != 2) {
    throw InvalidArgument("outer_product_features: expected [T, F, M, 2], got " +
                          shape_string(x.shape()));
  }
  const int T = x.dim(0), F = x.dim(1), M = x.dim(2);
  const std::size_t cells = static_cast<std::size_t>(T) * F;
  const std::size_t mm = static_cast<std::size_t>(M) * M;
  const auto xv = x.values();
  std::vector<double> v(cells * 2 * mm);
  for (std::size_t c = 0; c < cells; ++c) {
    const double* in = xv.data() + c * M * 2;
    double* re = v.data() + c * 2 * mm;
    double* im = re + mm;
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) {
        const double ar = in[2 * a], ai = in[2 * a + 1];
        const double br = in[2 * b], bi = in[2 * b + 1];
        re[a * M + b] = ar * br + ai * bi;
        im[a * M + b] = ai * br - ar * bi;
      }
  }
  return make_result("outer_product_features", {T, F, 2, M, M}, std::move(v), {x},
                     [cells, mm, M](Node& s) {
                       double* g = grad_of(s, 0);
                       if (!g) return;
                       const auto& xv = s.inputs[0]->value;
                       for (std::size_t c = 0; c < cells; ++c) {
                         const double* in = xv.data() + c * M * 2;
                         double* gin = g + c * M * 2;
                         const double* gre = s.grad.data() + c * 2 * mm;
                         const double* gim = gre + mm;
                         for (int a = 0; a < M; ++a)
                           for (int b = 0; b < M; ++b) {
                             const double ar = in[2 * a], ai = in[2 * a + 1];
                             const double br = in[2 * b], bi = in[2 * b + 1];
                             const double gR = gre[a * M + b], gI = gim[a * M + b];
                             gin[2 * a] += gR * br - gI * bi;
                             gin[2 * a + 1] += gR * bi + gI * br;
                             gin[2 * b] += gR * ar + gI * ai;
                             gin[2 * b + 1] += gR * ai - gI * ar;
                           }
                       }
                     });
}

Tensor beamform_apply(const Tensor& weights, const Spectrogram& spec) {
  const int T = spec.frames(), F = spec.bins(), M = spec.channels();
  if (weights.shape() != Shape{T, F, 2 * M}) {
    throw InvalidArgument("beamform_apply: weights " + shape_string(weights.shape()) +
                          " do not match [" + std::to_string(T) + ", " + std::to_string(F) +
                          ", " + std::to_string(2 * M) + "]");
  }
  const auto wv = weights.values();
  std::vector<double> v(static_cast<std::size_t>(T) * F * 2);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      const double* w = wv.data() + (static_cast<std::size_t>(t) * F + f) * 2 * M;
      double re = 0.0, im = 0.0;
      for (int m = 0; m < M; ++m) {
        const Complex y = spec(m, t, f);
        re += w[m] * y.real() + w[M + m] * y.imag();
        im += w[m] * y.imag() - w[M + m] * y.real();
      }
      v[(static_cast<std::size_t>(t) * F + f) * 2] = re;
      v[(static_cast<std::size_t>(t) * F + f) * 2 + 1] = im;
    }
  auto held = std::make_shared<Spectrogram>(spec);
  return make_result("beamform_apply", {T, F, 2}, std::move(v), {weights},
                     [held, T, F, M](Node& s) {
                       double* g = grad_of(s, 0);
                       if (!g) return;
                       for (int t = 0; t < T; ++t)
                         for (int f = 0; f < F; ++f) {
                           const std::size_t cell = static_cast<std::size_t>(t) * F + f;
                           const double gr = s.grad[cell * 2], gi = s.grad[cell * 2 + 1];
                           double* gw = g + cell * 2 * M;
                           for (int m = 0; m < M; ++m) {
                             const Complex y = (*held)(m, t, f);
                             gw[m] += gr * y.real() + gi * y.imag();
                             gw[M + m] += gr * y.imag() - gi * y.real();
                           }
                         }
                     });
}

Tensor istft_tensor(const Tensor& spec, const StftConfig& cfg, std::size_t length) {
  cfg.validate();
  if (spec.rank() != 3 || spec.dim(1) != cfg.num_bins() || spec.dim(2) != 2) {
    throw InvalidArgument("istft_tensor: expected [T, " + std::to_string(cfg.num_bins()) +
                          ", 2], got " + shape_string(spec.shape()));
  }
  const int T = spec.dim(0);
  std::vector<Complex> coeffs(spec.size() / 2);
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    coeffs[i] = {spec.values()[2 * i], spec.values()[2 * i + 1]};
  }
  auto out = synthesize_channel(coeffs, T, cfg, length);
  return make_result("istft", {static_cast<int>(length)}, std::move(out), {spec},
                     [cfg, T](Node& s) {
                       double* g = grad_of(s, 0);
                       if (!g) return;
                       const auto adj = synthesize_channel_adjoint(s.grad, T, cfg);
                       for (std::size_t i = 0; i < adj.size(); ++i) {
                         g[2 * i] += adj[i].real();
                         g[2 * i + 1] += adj[i].imag();
                       }
                     });
}

Tensor si_sdr_tensor(const Tensor& estimate, const Tensor& reference) {
  if (estimate.shape() != reference.shape()) {
    throw InvalidArgument("si_sdr: shape mismatch " + shape_string(estimate.shape()) + " vs " +
                          shape_string(reference.shape()));
  }
  const auto e = estimate.values();
  const auto r = reference.values();
  double p = 0.0, R = 0.0, E = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    p += e[i] * r[i];
    R += r[i] * r[i];
    E += e[i] * e[i];
  }
  if (R <= 0.0) throw InvalidArgument("si_sdr: reference has zero energy");
  const double S = p * p / R;
  const double N = std::max(E - S, 0.0);
  double value;
  bool active = false;
  if (S <= 0.0) {
    value = -kSiSdrCap;
  } else if (N <= 0.0) {
    value = kSiSdrCap;
  } else {
    value = 10.0 * std::log10(S / N);
    active = std::abs(value) < kSiSdrCap;
    value = std::clamp(value, -kSiSdrCap, kSiSdrCap);
  }
  return make_result("si_sdr", {1}, {value}, {estimate, reference},
                     [active, p, R, N](Node& s) {
                       if (!active) return;
                       const auto& ev = s.inputs[0]->value;
                       const auto& rv = s.inputs[1]->value;
                       const double k = 10.0 / std::log(10.0) * s.grad[0];
                       if (double* g = grad_of(s, 0)) {
                         for (std::size_t i = 0; i < ev.size(); ++i) {
                           g[i] += k * (2.0 * rv[i] / p - (2.0 * ev[i] - 2.0 * p * rv[i] / R) / N);
                         }
                       }
                       if (double* g = grad_of(s, 1)) {
                         // d/dr of ln S - ln N with S = p^2/R, N = E - p^2/R.
                         const double S = p * p / R;
                         for (std::size_t i = 0; i < rv.size(); ++i) {
                           const double dS = 2.0 * p * ev[i] / R - 2.0 * S * rv[i] / R;
                           g[i] += k * (dS / S + dS / N);
                         }
                       }
                     });
}

Tensor joint_loss(const Tensor& est_wave, const Tensor& ref_wave, const Tensor& est_spec,
                  const Tensor& ref_spec) {
  return add(scale(si_sdr_tensor(est_wave, ref_wave), -1.0), mse(est_spec, ref_spec));
}

}  // namespace beamkit::nn
