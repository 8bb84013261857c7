#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "beamkit/error.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/sources.hpp"
#include "support.hpp"

namespace beamkit {
namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> gaussian(std::uint64_t seed, std::size_t n, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> out(n);
  for (auto& x : out) x = g(rng);
  return out;
}

std::vector<double> speech(std::uint64_t seed, double seconds = 3.0) {
  return to_vec(synthetic_speech(seed, static_cast<std::size_t>(seconds * 16000), 16000));
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

TEST(SiSdr, IdenticalSignalsHitTheCap) {
  const auto x = gaussian(1, 1000);
  EXPECT_EQ(si_sdr(x, x), kSiSdrCap);
  EXPECT_EQ(kSiSdrCap, 60.0);
}

TEST(SiSdr, OrthogonalTenPercentErrorIsTwentyDb) {
  // Gram-Schmidt an independent draw against the reference, then scale it to
  // 10% of the reference norm.
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const auto ref = gaussian(seed, 4000);
    auto e = gaussian(seed + 100, 4000);
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * ref[i];
    for (std::size_t i = 0; i < e.size(); ++i) e[i] -= dot / energy(ref) * ref[i];
    const double k = 0.1 * std::sqrt(energy(ref) / energy(e));
    std::vector<double> est(ref.size());
    for (std::size_t i = 0; i < est.size(); ++i) est[i] = ref[i] + k * e[i];
    EXPECT_NEAR(si_sdr(est, ref), 20.0, 0.01);
  }
}

TEST(SiSdr, ScaleInvariance) {
  const auto ref = gaussian(5, 2000);
  const auto est = gaussian(6, 2000);
  const double base = si_sdr(est, ref);
  // Powers of two scale every intermediate exactly.
  for (double alpha : {0.25, 2.0, 1024.0}) {
    std::vector<double> scaled(est);
    for (auto& v : scaled) v *= alpha;
    EXPECT_EQ(si_sdr(scaled, ref), base);
  }
  for (double alpha : {0.01, 0.7, 3.3, 1e4}) {
    std::vector<double> scaled(est);
    for (auto& v : scaled) v *= alpha;
    EXPECT_NEAR(si_sdr(scaled, ref), base, 1e-10);
  }
  std::vector<double> scaled_ref(ref);
  for (auto& v : scaled_ref) v *= 3.0;
  EXPECT_EQ(si_sdr(scaled_ref, ref), kSiSdrCap);
}

TEST(SiSdr, DependsOnlyOnTheCorrelation) {
  // With rho the normalized inner product, the projection leaves
  // rho^2 |est|^2 as target and (1 - rho^2) |est|^2 as error.
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    const auto a = gaussian(seed, 3000);
    auto b = gaussian(seed + 10, 3000, 0.3 * seed);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += a[i];
    double ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
    const double rho2 = ab * ab / (energy(a) * energy(b));
    const double expected = 10.0 * std::log10(rho2 / (1.0 - rho2));
    EXPECT_NEAR(si_sdr(b, a), expected, 1e-9);
    EXPECT_NEAR(si_sdr(a, b), expected, 1e-9);
  }
}

TEST(SiSdr, Errors) {
  const auto a = gaussian(9, 100);
  const std::vector<double> zero(100, 0.0);
  const auto shorter = gaussian(10, 99);
  EXPECT_THROW(si_sdr(a, zero), InvalidArgument);
  EXPECT_THROW(si_sdr(a, shorter), InvalidArgument);
  EXPECT_EQ(si_sdr(zero, a), -kSiSdrCap);
}

TEST(Stoi, IdenticalSignalsScoreOne) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = speech(seed);
    EXPECT_NEAR(stoi(x, x, 16000), 1.0, 1e-6);
  }
}

TEST(Stoi, NoiseAgainstSpeechIsLow) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ref = speech(seed + 20);
    const auto noise = gaussian(seed + 50, ref.size(), 0.1);
    EXPECT_LT(stoi(noise, ref, 16000), 0.3) << "seed " << seed;
  }
}

std::vector<double> at_snr(const std::vector<double>& s, const std::vector<double>& n, double snr) {
  const double k = std::sqrt(energy(s) / energy(n) / std::pow(10.0, snr / 10.0));
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] + k * n[i];
  return out;
}

TEST(Stoi, CleanerMixturesScoreHigher) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = speech(seed + 30);
    const auto n = gaussian(seed + 60, s.size());
    EXPECT_GT(stoi(at_snr(s, n, 10.0), s, 16000), stoi(at_snr(s, n, -5.0), s, 16000))
        << "seed " << seed;
  }
}

TEST(Stoi, StaysInUnitInterval) {
  std::mt19937_64 rng(70);
  std::uniform_real_distribution<double> snr(-20.0, 30.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = speech(100 + trial, 1.5);
    const auto n = gaussian(200 + trial, s.size());
    const double v = stoi(at_snr(s, n, snr(rng)), s, 16000);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    // Sign-flipped estimate: correlations go negative, the score must not.
    std::vector<double> flipped(s);
    for (auto& x : flipped) x = -x;
    const double w = stoi(flipped, s, 16000);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
  }
}

TEST(Stoi, TooShortInputFails) {
  const auto x = speech(3, 0.2);
  EXPECT_THROW(stoi(x, x, 16000), InvalidArgument);
  const auto y = speech(3, 2.0);
  const std::vector<double> z(y.begin(), y.end() - 1);
  EXPECT_THROW(stoi(z, y, 16000), InvalidArgument);
}

TEST(MetricReport, CsvAndJson) {
  MetricReport r;
  r.utterances = {{"a", 10.0, 0.8}, {"b", 4.0, 0.6}};
  EXPECT_DOUBLE_EQ(r.mean_si_sdr(), 7.0);
  EXPECT_DOUBLE_EQ(r.mean_stoi(), 0.7);
  testing::TempDir dir("metrics");
  r.write_csv(dir / "m.csv");
  r.write_json(dir / "m.json");
  std::ifstream csv(dir / "m.csv");
  std::stringstream body;
  body << csv.rdbuf();
  EXPECT_EQ(body.str(), "id,si_sdr_db,stoi\na,10,0.8\nb,4,0.6\n");
  std::ifstream js(dir / "m.json");
  const auto doc = nlohmann::json::parse(js);
  EXPECT_EQ(doc.at("count").get<int>(), 2);
  EXPECT_DOUBLE_EQ(doc.at("mean_si_sdr_db").get<double>(), 7.0);
  EXPECT_DOUBLE_EQ(doc.at("mean_stoi").get<double>(), 0.7);
  EXPECT_EQ(doc.at("pesq").get<std::string>(), "not computed");
}

}  // namespace
}  // namespace beamkit
