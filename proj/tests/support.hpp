#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Core>

#include "beamkit/neural/tensor.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit::testing {

inline Eigen::MatrixXd random_signal(std::mt19937_64& rng, int channels, int length) {
  std::normal_distribution<double> n(0.0, 0.3);
  Eigen::MatrixXd x(channels, length);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < length; ++i) x(c, i) = n(rng);
  return x;
}

inline MultichannelWave wave_of(Eigen::MatrixXd samples, int rate = 16000) {
  MultichannelWave w;
  w.samples = std::move(samples);
  w.sample_rate = rate;
  return w;
}

inline Eigen::MatrixXcd random_pd(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> n;
  Eigen::MatrixXcd a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = {n(rng), n(rng)};
  Eigen::MatrixXcd phi = a * a.adjoint();
  phi += 0.1 * Eigen::MatrixXcd::Identity(m, m);
  return phi;
}

inline Eigen::VectorXcd random_complex(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> n;
  Eigen::VectorXcd v(m);
  for (int i = 0; i < m; ++i) v(i) = {n(rng), n(rng)};
  return v;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("beamkit_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nn::Tensor random_tensor(std::mt19937_64& rng, nn::Shape shape, double scale = 1.0,
                                bool param = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(nn::numel(shape));
  for (auto& e : v) e = n(rng);
  return param ? nn::Tensor::parameter(std::move(shape), std::move(v))
               : nn::Tensor::constant(std::move(shape), std::move(v));
}

struct GradCheck {
  double max_relative_error = 0.0;
  std::string worst;  // label of the tensor with the largest error
  int coordinates = 0;
};

/// Central finite differences against reverse-mode gradients. For each tensor
/// up to `per_tensor` coordinates are probed (all of them when the tensor is
/// smaller). The error of a tensor is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||) over its probed coordinates; tensors whose gradients are
/// both below `floor` count as agreeing.
///
/// `eps` <= 0 selects the step per coordinate: central differences at 1e-2
/// down to 1e-6, keeping the middle estimate of the three neighbouring steps
/// that agree best once each is charged its expected rounding error. Large steps straddle kinks, small ones drown tiny gradients in
/// rounding noise; agreement between neighbours shows neither is happening.
inline constexpr double kAdaptiveStep = 0.0;

inline double central_difference(const std::function<nn::Tensor()>& loss,
                                  std::span<double> values, std::size_t i, double eps) {
  const double saved = values[i];
  values[i] = saved + eps;
  const double up = loss().item();
  values[i] = saved - eps;
  const double down = loss().item();
  values[i] = saved;
  return (up - down) / (2.0 * eps);
}

inline double numeric_derivative(const std::function<nn::Tensor()>& loss,
                                  std::span<double> values, std::size_t i, double eps) {
  if (eps > 0.0) return central_difference(loss, values, i, eps);
  // Half-decade ladder from 1e-2 down to 1e-6.
  constexpr int kSteps = 9;
  double est[kSteps];
  for (int k = 0; k < kSteps; ++k) {
    est[k] = central_difference(loss, values, i, 1e-2 * std::pow(10.0, -0.5 * k));
  }
  // Flattest run of three neighbours; two can agree by accident in the noise.
  // Small steps also pay for the rounding error they are expected to carry,
  // eps_mach |L| / h, so noise that happens to look flat does not win.
  const double rounding = 16.0 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, std::abs(loss().item()));
  auto score = [&](int k) {
    const double spread =
        std::max({est[k], est[k + 1], est[k + 2]}) - std::min({est[k], est[k + 1], est[k + 2]});
    return spread + rounding / (1e-2 * std::pow(10.0, -0.5 * (k + 2)));
  };
  int best = 0;
  for (int k = 1; k + 2 < kSteps; ++k) {
    if (score(k) < score(best)) best = k;
  }
  return est[best + 1];
}

inline GradCheck check_gradients(const std::vector<nn::Tensor>& inputs,
                                 const std::vector<std::string>& labels,
                                 const std::function<nn::Tensor()>& loss, std::uint64_t seed,
                                 int per_tensor = 1 << 30, double eps = 1e-6,
                                 double floor = 1e-9) {
  for (const auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }
  std::mt19937_64 rng(seed);
  GradCheck out;
  nn::NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    nn::Tensor t = inputs[k];
    std::vector<std::size_t> coords(t.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (static_cast<int>(coords.size()) > per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(per_tensor));
    }
    double diff = 0.0, na = 0.0, nn_ = 0.0;
    for (std::size_t i : coords) {
      const double numeric = numeric_derivative(loss, t.mutable_values(), i, eps);
      diff += (analytic[k][i] - numeric) * (analytic[k][i] - numeric);
      na += analytic[k][i] * analytic[k][i];
      nn_ += numeric * numeric;
      ++out.coordinates;
    }
    const double scale = std::sqrt(std::max(na, nn_));
    const double rel = scale < floor ? 0.0 : std::sqrt(diff) / scale;
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst = k < labels.size() ? labels[k] : "input " + std::to_string(k);
    }
  }
  return out;
}

}  // namespace beamkit::testing
