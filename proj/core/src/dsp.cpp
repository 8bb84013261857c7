#include "dsp.hpp"

#include <algorithm>

#include <unsupported/Eigen/FFT>

namespace beamkit::dsp {

namespace {

// Kiss FFT keeps its twiddle tables per size inside the object, so reusing one
// per thread avoids rebuilding them on every frame.
Eigen::FFT<double>& half_spectrum_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace

std::vector<Complex> rfft(std::span<const double> input, int n) {
  std::vector<double> padded(static_cast<std::size_t>(n), 0.0);
  std::copy_n(input.begin(), std::min<std::size_t>(input.size(), padded.size()),
              padded.begin());
  auto& fft = half_spectrum_fft();
  std::vector<Complex> out;
  fft.fwd(out, padded);
  out.resize(static_cast<std::size_t>(n / 2 + 1));
  return out;
}

std::vector<double> irfft(std::span<const Complex> spectrum, int n) {
  std::vector<Complex> half(spectrum.begin(), spectrum.end());
  half.resize(static_cast<std::size_t>(n / 2 + 1));
  half.front().imag(0.0);
  half.back().imag(0.0);
  auto& fft = half_spectrum_fft();
  std::vector<double> out;
  fft.inv(out, half, n);
  return out;
}

int next_pow2(std::size_t n) {
  int p = 1;
  while (static_cast<std::size_t>(p) < n) p <<= 1;
  return p;
}

int next_fast_size(std::size_t n) {
  // Smallest 2^a 3^b 5^c >= n; radices Kiss FFT handles natively.
  std::size_t best = static_cast<std::size_t>(next_pow2(n));
  for (std::size_t p5 = 1; p5 < best; p5 *= 5) {
    for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
      std::size_t m = p35;
      while (m < n) m *= 2;
      best = std::min(best, m);
    }
  }
  return static_cast<int>(best);
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> h,
                             std::size_t out_len) {
  return convolve_each(x, {h}, out_len).front();
}

std::vector<std::vector<double>> convolve_each(std::span<const double> x,
                                               const std::vector<std::span<const double>>& hs,
                                               std::size_t out_len) {
  std::size_t longest = 0;
  for (const auto& h : hs) longest = std::max(longest, h.size());
  std::vector<std::vector<double>> out;
  out.reserve(hs.size());
  if (x.empty() || longest == 0) {
    out.assign(hs.size(), std::vector<double>(out_len, 0.0));
    return out;
  }
  // Output samples below out_len only see inputs below out_len, and the FFT
  // must cover the linear length of those truncated inputs to avoid wrap-around.
  const std::size_t xs = std::min(x.size(), out_len);
  const std::size_t hl = std::min(longest, out_len);
  if (xs == 0) {
    out.assign(hs.size(), std::vector<double>(out_len, 0.0));
    return out;
  }
  const int n = next_fast_size(xs + hl - 1);
  const auto xf = rfft(x.first(xs), n);
  for (const auto& h : hs) {
    if (h.empty()) {
      out.emplace_back(out_len, 0.0);
      continue;
    }
    auto yf = rfft(h.first(std::min(h.size(), out_len)), n);
    for (std::size_t k = 0; k < yf.size(); ++k) yf[k] *= xf[k];
    auto y = irfft(yf, n);
    y.resize(out_len, 0.0);
    out.push_back(std::move(y));
  }
  return out;
}

}  // namespace beamkit::dsp
