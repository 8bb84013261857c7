#pragma once

#include <cstddef>

#include "beamkit/neural/tensor.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit::nn {

/// Mixture spectrogram as a constant tensor [T, F, M, 2] (re, im last).
Tensor spectrogram_tensor(const Spectrogram& spec);

/// One channel of a spectrogram as a constant tensor [T, F, 2].
Tensor channel_tensor(const Spectrogram& spec, int channel);

/// Applies a complex mask [2, F, T] (re plane, im plane) to every channel of
/// `spec`; result [T, F, M, 2].
Tensor complex_mask_apply(const Tensor& mask, const Spectrogram& spec);

/// Per (t, f) outer products x x^H of a [T, F, M, 2] tensor, returned as
/// [T, F, 2, M, M] with the real part first.
Tensor outer_product_features(const Tensor& x);

/// X(t, f) = sum_m conj(w_m) Y_m(t, f). Weights are [T, F, 2M] laid out as
/// M real parts then M imaginary parts; result [T, F, 2].
Tensor beamform_apply(const Tensor& weights, const Spectrogram& spec);

/// Differentiable inverse STFT of a [T, F, 2] single-channel spectrum.
Tensor istft_tensor(const Tensor& spec, const StftConfig& cfg, std::size_t length);

/// Scale-invariant SDR in dB, capped at +-60 dB. The gradient vanishes where
/// the cap is active.
Tensor si_sdr_tensor(const Tensor& estimate, const Tensor& reference);

/// -SI-SDR(est_wave, ref_wave) + MSE(est_spec, ref_spec).
Tensor joint_loss(const Tensor& est_wave, const Tensor& ref_wave, const Tensor& est_spec,
                  const Tensor& ref_spec);

}  // namespace beamkit::nn
