#pragma once

// Internal FFT and convolution helpers shared by the signal modules.

#include <complex>
#include <span>
#include <vector>

namespace beamkit::dsp {

using Complex = std::complex<double>;

/// One-sided spectrum (n/2 + 1 bins) of a real signal zero-padded to `n`.
std::vector<Complex> rfft(std::span<const double> input, int n);

/// Real inverse of a one-sided spectrum, scaled by 1/n. Imaginary parts of
/// the DC and Nyquist bins are ignored.
std::vector<double> irfft(std::span<const Complex> spectrum, int n);

int next_pow2(std::size_t n);
/// Smallest size >= n whose only prime factors are 2, 3 and 5.
int next_fast_size(std::size_t n);

/// Linear convolution truncated to `out_len` samples, computed with FFTs.
std::vector<double> convolve(std::span<const double> x, std::span<const double> h,
                             std::size_t out_len);
/// Convolves one signal with several filters, transforming the signal once.
std::vector<std::vector<double>> convolve_each(std::span<const double> x,
                                               const std::vector<std::span<const double>>& hs,
                                               std::size_t out_len);

}  // namespace beamkit::dsp
