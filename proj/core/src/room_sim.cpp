#include "beamkit/room_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "beamkit/error.hpp"
#include "beamkit/sources.hpp"
#include "dsp.hpp"
#include "random.hpp"

namespace beamkit {

namespace {

constexpr double kColinearTolerance = 1e-6;
constexpr int kMaxImageOrder = 30;
constexpr int kSincHalfWidth = 32;

bool inside(const Vec3& p, const Vec3& dims, double margin = 0.0) {
  for (int i = 0; i < 3; ++i) {
    if (p[i] <= margin || p[i] >= dims[i] - margin) return false;
  }
  return true;
}

double mean_power(const Eigen::MatrixXd& samples, int row) {
  return samples.row(row).squaredNorm() / static_cast<double>(samples.cols());
}

}  // namespace

Vec3 ArrayGeometry::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& p : mic_positions) c += p;
  return c / static_cast<double>(std::max<std::size_t>(1, mic_positions.size()));
}

void ArrayGeometry::validate() const {
  const int m = num_mics();
  if (m < 2) throw InvalidArgument("array needs at least 2 mics");
  if (reference_mic < 0 || reference_mic >= m) {
    throw InvalidArgument("reference_mic " + std::to_string(reference_mic) +
                          " out of range");
  }
  for (const auto& [i, j] : pairs) {
    if (i == j || i < 0 || j < 0 || i >= m || j >= m) {
      throw InvalidArgument("invalid mic pair (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
    }
  }
}

ArrayGeometry ArrayGeometry::uniform_linear(int count, double spacing, const Vec3& center) {
  ArrayGeometry array;
  for (int m = 0; m < count; ++m) {
    array.mic_positions.push_back(center +
                                  Vec3((m - 0.5 * (count - 1)) * spacing, 0.0, 0.0));
  }
  for (int m = 1; m < count; ++m) array.pairs.emplace_back(0, m);
  return array;
}

Vec3 array_axis(const ArrayGeometry& array) {
  if (array.num_mics() < 2) throw InvalidArgument("array needs at least 2 mics");
  const Vec3& first = array.mic_positions.front();
  const Vec3 span = array.mic_positions.back() - first;
  if (span.norm() < kColinearTolerance) {
    throw InvalidArgument("first and last mic coincide; array axis undefined");
  }
  const Vec3 axis = span.normalized();
  for (const auto& p : array.mic_positions) {
    const Vec3 d = p - first;
    if ((d - d.dot(axis) * axis).norm() > kColinearTolerance) {
      throw InvalidArgument("array is not linear (mics are not colinear)");
    }
  }
  return axis;
}

std::vector<double> axial_coordinates(const ArrayGeometry& array) {
  const Vec3 axis = array_axis(array);
  const Vec3& ref = array.mic_positions.at(static_cast<std::size_t>(array.reference_mic));
  std::vector<double> x;
  x.reserve(array.mic_positions.size());
  for (const auto& p : array.mic_positions) x.push_back((p - ref).dot(axis));
  return x;
}

double doa_of(const Vec3& source, const ArrayGeometry& array) {
  const Vec3 endfire = -array_axis(array);
  const Vec3 dir = source - array.centroid();
  if (dir.norm() == 0.0) throw InvalidArgument("source coincides with array centroid");
  const double c = std::clamp(endfire.dot(dir.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

namespace {
double sabine_coefficient(const RoomConfig& room) {
  const Vec3& d = room.dimensions;
  const double volume = d.prod();
  const double surface = 2.0 * (d.x() * d.y() + d.x() * d.z() + d.y() * d.z());
  return 24.0 * std::log(10.0) * volume / (room.speed_of_sound * surface * room.rt60);
}
}  // namespace

double sabine_absorption(const RoomConfig& room) {
  if (!(room.rt60 > 0.0)) throw InvalidArgument("rt60 must be positive");
  if ((room.dimensions.array() <= 0.0).any()) {
    throw InvalidArgument("room dimensions must be positive");
  }
  const double alpha = sabine_coefficient(room);
  if (alpha > 1.0) {
    throw InvalidArgument("rt60 " + std::to_string(room.rt60) +
                          " s is unreachable for this room (absorption " +
                          std::to_string(alpha) + " > 1)");
  }
  return alpha;
}

int effective_image_order(const RoomConfig& room) {
  if (room.max_image_order >= 0) return room.max_image_order;
  const double shortest = room.dimensions.minCoeff();
  const int order =
      static_cast<int>(std::ceil(room.speed_of_sound * room.rt60 / shortest));
  return std::clamp(order, 1, kMaxImageOrder);
}

ImpulseResponseSet simulate_rir(const RoomConfig& room, const Vec3& source,
                                const ArrayGeometry& array) {
  array.validate();
  if (!inside(source, room.dimensions)) throw InvalidArgument("source is outside the room");
  for (const auto& mic : array.mic_positions) {
    if (!inside(mic, room.dimensions)) throw InvalidArgument("mic is outside the room");
  }
  const double beta = std::sqrt(1.0 - sabine_absorption(room));
  const int order = effective_image_order(room);
  const double fs = room.sample_rate;
  const double c = room.speed_of_sound;
  const bool sinc = room.interpolation == DelayInterpolation::kWindowedSinc;

  double max_direct = 0.0;
  for (const auto& mic : array.mic_positions) {
    max_direct = std::max(max_direct, (mic - source).norm() / c * fs);
  }
  const auto taps = static_cast<Eigen::Index>(std::ceil(room.rt60 * fs + max_direct) +
                                              (sinc ? kSincHalfWidth : 0) + 1);

  std::vector<double> beta_pow(static_cast<std::size_t>(order) + 1, 1.0);
  for (int k = 1; k <= order; ++k) beta_pow[k] = beta_pow[k - 1] * beta;

  ImpulseResponseSet out;
  out.sample_rate = room.sample_rate;
  out.rir = Eigen::MatrixXd::Zero(array.num_mics(), taps);
  const Vec3& dims = room.dimensions;

  for (int qx = 0; qx < 2; ++qx)
    for (int nx = -order; nx <= order; ++nx) {
      const int rx = std::abs(nx - qx) + std::abs(nx);
      if (rx > order) continue;
      const double ix = (1 - 2 * qx) * source.x() + 2.0 * nx * dims.x();
      for (int qy = 0; qy < 2; ++qy)
        for (int ny = -order; ny <= order; ++ny) {
          const int ry = std::abs(ny - qy) + std::abs(ny);
          if (rx + ry > order) continue;
          const double iy = (1 - 2 * qy) * source.y() + 2.0 * ny * dims.y();
          for (int qz = 0; qz < 2; ++qz)
            for (int nz = -order; nz <= order; ++nz) {
              const int rz = std::abs(nz - qz) + std::abs(nz);
              const int reflections = rx + ry + rz;
              if (reflections > order) continue;
              const Vec3 image(ix, iy, (1 - 2 * qz) * source.z() + 2.0 * nz * dims.z());
              for (int m = 0; m < array.num_mics(); ++m) {
                const double r = (image - array.mic_positions[m]).norm();
                const double delay = r / c * fs;
                const double gain = beta_pow[reflections] / (4.0 * std::numbers::pi * r);
                if (!sinc) {
                  const auto tap = static_cast<Eigen::Index>(std::lround(delay));
                  if (tap < taps) out.rir(m, tap) += gain;
                  continue;
                }
                const auto centre = static_cast<Eigen::Index>(std::floor(delay));
                for (Eigen::Index k = centre - kSincHalfWidth + 1;
                     k <= centre + kSincHalfWidth; ++k) {
                  if (k < 0 || k >= taps) continue;
                  const double x = static_cast<double>(k) - delay;
                  const double s =
                      x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
                  const double w =
                      0.5 + 0.5 * std::cos(std::numbers::pi * x / kSincHalfWidth);
                  out.rir(m, k) += gain * s * w;
                }
              }
            }
        }
    }
  return out;
}

MixtureScene mix_scene(const Eigen::VectorXd& target_dry, const Eigen::VectorXd& interf_dry,
                       const ImpulseResponseSet& rir_target,
                       const ImpulseResponseSet& rir_interf, const MultichannelWave& noise,
                       double sir_db, double snr_db, int reference_mic) {
  const auto length = static_cast<std::size_t>(target_dry.size());
  const auto mics = rir_target.rir.rows();
  if (length == 0) throw InvalidArgument("target signal is empty");
  if (static_cast<std::size_t>(interf_dry.size()) != length) {
    throw InvalidArgument("target and interference must have equal length");
  }
  if (rir_interf.rir.rows() != mics || noise.channels() != mics) {
    throw InvalidArgument("RIR sets and noise must share the mic count");
  }
  if (static_cast<std::size_t>(noise.length()) != length) {
    throw InvalidArgument("noise length must match the dry signals");
  }
  if (rir_target.sample_rate != rir_interf.sample_rate ||
      rir_target.sample_rate != noise.sample_rate) {
    throw InvalidArgument("sample rates differ between sources, RIRs and noise");
  }
  if (reference_mic < 0 || reference_mic >= mics) {
    throw InvalidArgument("reference mic out of range");
  }

  auto render = [&](const Eigen::VectorXd& dry, const ImpulseResponseSet& rir) {
    Eigen::MatrixXd out(mics, static_cast<Eigen::Index>(length));
    std::vector<Eigen::VectorXd> rows;
    std::vector<std::span<const double>> filters;
    for (Eigen::Index m = 0; m < mics; ++m) rows.emplace_back(rir.rir.row(m).transpose());
    for (const auto& h : rows) filters.emplace_back(h.data(), static_cast<std::size_t>(h.size()));
    const auto ys = dsp::convolve_each({dry.data(), length}, filters, length);
    for (Eigen::Index m = 0; m < mics; ++m) {
      out.row(m) = Eigen::Map<const Eigen::RowVectorXd>(ys[static_cast<std::size_t>(m)].data(),
                                                        static_cast<Eigen::Index>(length));
    }
    return out;
  };

  Eigen::MatrixXd target = render(target_dry, rir_target);
  Eigen::MatrixXd interf = render(interf_dry, rir_interf);
  Eigen::MatrixXd background = noise.samples;

  const double p_target = mean_power(target, reference_mic);
  const double p_interf = mean_power(interf, reference_mic);
  const double p_noise = mean_power(background, reference_mic);
  if (!(p_target > 0.0)) throw InvalidArgument("target is silent at the reference mic");
  if (!(p_interf > 0.0)) {
    throw InvalidArgument("interference is silent; SIR scaling is undefined");
  }
  if (!(p_noise > 0.0)) throw InvalidArgument("noise is silent; SNR scaling is undefined");
  interf *= std::sqrt(p_target / (p_interf * std::pow(10.0, sir_db / 10.0)));
  background *= std::sqrt(p_target / (p_noise * std::pow(10.0, snr_db / 10.0)));

  MixtureScene scene;
  const int fs = rir_target.sample_rate;
  scene.target_reverberant = {target, fs};
  scene.interference_reverberant = {interf, fs};
  scene.noise = {background, fs};
  scene.mixture = {target + interf + background, fs};
  scene.sir_db = sir_db;
  scene.snr_db = snr_db;
  return scene;
}

void SimulationConfig::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(room_min[i] > 0.0) || room_min[i] > room_max[i]) {
      throw InvalidArgument("room size range is invalid");
    }
  }
  if (!(rt60.lo > 0.0) || rt60.lo > rt60.hi) throw InvalidArgument("rt60 range is invalid");
  if (sir_db.lo > sir_db.hi || snr_db.lo > snr_db.hi) {
    throw InvalidArgument("SIR/SNR range is invalid");
  }
  if (!(source_distance.lo > 0.0) || source_distance.lo > source_distance.hi) {
    throw InvalidArgument("source distance range is invalid");
  }
  if (min_separation_deg < 0.0 || min_separation_deg >= 180.0) {
    throw InvalidArgument("min_separation_deg must lie in [0, 180)");
  }
  if (!(clip_seconds > 0.0) || sample_rate <= 0) {
    throw InvalidArgument("clip length and sample rate must be positive");
  }
  if (mic_count < 2 || !(mic_spacing > 0.0)) {
    throw InvalidArgument("array needs >= 2 mics with positive spacing");
  }
  ArrayGeometry probe = ArrayGeometry::uniform_linear(mic_count, mic_spacing, Vec3::Zero());
  probe.pairs = pairs;
  probe.validate();
  const double aperture = (mic_count - 1) * mic_spacing;
  if (2.0 * wall_margin + aperture >= room_min.minCoeff()) {
    throw InvalidArgument("wall margin leaves no room to place the array");
  }
}

ScenePlan plan_scene(std::uint64_t seed, const SimulationConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(seed));
  ScenePlan plan;
  plan.seed = seed;
  plan.room.sample_rate = cfg.sample_rate;
  plan.room.interpolation = cfg.interpolation;
  // Large rooms cannot reach the shortest rt60 values; redraw both together.
  bool reachable = false;
  for (int attempt = 0; attempt < cfg.max_placement_retries && !reachable; ++attempt) {
    for (int i = 0; i < 3; ++i) {
      plan.room.dimensions[i] = uniform(rng, cfg.room_min[i], cfg.room_max[i]);
    }
    plan.room.rt60 = uniform(rng, cfg.rt60.lo, cfg.rt60.hi);
    reachable = sabine_coefficient(plan.room) <= 1.0;
  }
  if (!reachable) {
    throw Error("no room in range reaches an rt60 in range after " +
                std::to_string(cfg.max_placement_retries) + " draws (seed " +
                std::to_string(seed) + ")");
  }

  const Vec3& dims = plan.room.dimensions;
  const double aperture = (cfg.mic_count - 1) * cfg.mic_spacing;
  const double margin = cfg.wall_margin;

  bool placed = false;
  for (int attempt = 0; attempt < cfg.max_placement_retries && !placed; ++attempt) {
    const double half = 0.5 * aperture;
    const Vec3 center(uniform(rng, margin + half, dims.x() - margin - half),
                      uniform(rng, margin + half, dims.y() - margin - half),
                      uniform(rng, margin, dims.z() - margin));
    const double yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    ArrayGeometry array;
    const Vec3 axis(std::cos(yaw), std::sin(yaw), 0.0);
    for (int m = 0; m < cfg.mic_count; ++m) {
      array.mic_positions.push_back(center + (m - 0.5 * (cfg.mic_count - 1)) * cfg.mic_spacing * axis);
    }
    array.pairs = cfg.pairs;

    auto draw_source = [&]() {
      const double r = uniform(rng, cfg.source_distance.lo, cfg.source_distance.hi);
      const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double dz = uniform(rng, -0.3, 0.3);
      return Vec3(center.x() + r * std::cos(az), center.y() + r * std::sin(az), center.z() + dz);
    };
    const Vec3 target = draw_source();
    const Vec3 interf = draw_source();
    if (!inside(target, dims, margin) || !inside(interf, dims, margin)) continue;
    const double doa_t = doa_of(target, array);
    const double doa_i = doa_of(interf, array);
    if (std::abs(doa_t - doa_i) < cfg.min_separation_deg) continue;

    plan.array = std::move(array);
    plan.target_position = target;
    plan.interference_position = interf;
    plan.target_doa = doa_t;
    plan.interference_doa = doa_i;
    placed = true;
  }
  if (!placed) {
    throw Error("scene placement failed after " + std::to_string(cfg.max_placement_retries) +
                " attempts (seed " + std::to_string(seed) + ")");
  }
  plan.sir_db = uniform(rng, cfg.sir_db.lo, cfg.sir_db.hi);
  plan.snr_db = uniform(rng, cfg.snr_db.lo, cfg.snr_db.hi);
  plan.target_source_seed = rng();
  plan.interference_source_seed = rng();
  plan.noise_seed = rng();
  return plan;
}

MixtureScene render_scene(const ScenePlan& plan, const SimulationConfig& cfg) {
  const std::size_t length = cfg.clip_samples();
  const int fs = cfg.sample_rate;

  Eigen::VectorXd target_dry;
  Eigen::VectorXd interf_dry;
  if (cfg.speech_dir) {
    const auto files = list_corpus(*cfg.speech_dir);
    target_dry = corpus_excerpt(files, plan.target_source_seed, length, fs);
    interf_dry = corpus_excerpt(files, plan.interference_source_seed, length, fs);
  } else {
    target_dry = synthetic_speech(plan.target_source_seed, length, fs);
    interf_dry = synthetic_speech(plan.interference_source_seed, length, fs);
  }
  MultichannelWave noise{Eigen::MatrixXd(cfg.mic_count, static_cast<Eigen::Index>(length)), fs};
  if (cfg.noise_dir) {
    const auto files = list_corpus(*cfg.noise_dir);
    for (int m = 0; m < cfg.mic_count; ++m) {
      noise.samples.row(m) =
          corpus_excerpt(files, mix_seed(plan.noise_seed + m), length, fs).transpose();
    }
  } else {
    noise.samples = pink_noise(plan.noise_seed, cfg.mic_count, length);
  }
  if (cfg.noise_field == NoiseField::kDiffuse) {
    noise.samples = diffuse_field(noise.samples, plan.array.mic_positions, fs);
  }

  const auto rir_t = simulate_rir(plan.room, plan.target_position, plan.array);
  const auto rir_i = simulate_rir(plan.room, plan.interference_position, plan.array);
  MixtureScene scene = mix_scene(target_dry, interf_dry, rir_t, rir_i, noise, plan.sir_db,
                                 plan.snr_db, plan.array.reference_mic);

  // Common gain so every stored component fits a WAV file.
  constexpr double kPeak = 0.9;
  const double peak = std::max(
      {scene.mixture.samples.cwiseAbs().maxCoeff(),
       scene.target_reverberant.samples.cwiseAbs().maxCoeff(),
       scene.interference_reverberant.samples.cwiseAbs().maxCoeff(),
       scene.noise.samples.cwiseAbs().maxCoeff()});
  if (peak > kPeak) {
    const double g = kPeak / peak;
    scene.target_reverberant.samples *= g;
    scene.interference_reverberant.samples *= g;
    scene.noise.samples *= g;
    scene.mixture.samples = scene.target_reverberant.samples +
                            scene.interference_reverberant.samples + scene.noise.samples;
  }

  scene.seed = plan.seed;
  scene.target_doa = plan.target_doa;
  scene.interference_doa = plan.interference_doa;
  scene.room = plan.room;
  scene.array = plan.array;
  scene.target_position = plan.target_position;
  scene.interference_position = plan.interference_position;
  return scene;
}

MixtureScene generate_scene(std::uint64_t seed, const SimulationConfig& cfg) {
  return render_scene(plan_scene(seed, cfg), cfg);
}

}  // namespace beamkit
