#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "beamkit/metrics.hpp"
#include "beamkit/pipeline.hpp"
#include "beamkit/scene_io.hpp"
#include "support.hpp"

namespace beamkit {
namespace {

namespace fs = std::filesystem;

PipelineConfig short_scenes(double seconds = 2.0) {
  PipelineConfig cfg;
  cfg.simulation.clip_seconds = seconds;
  return cfg;
}

std::vector<double> ref_row(const MultichannelWave& w, int row) {
  std::vector<double> v(static_cast<std::size_t>(w.samples.cols()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w.samples(row, static_cast<Eigen::Index>(i));
  return v;
}

bool contains_prefix(const std::vector<std::string>& v, const std::string& prefix) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.rfind(prefix, 0) == 0; });
}

TEST(PipelineConfig, DefaultsAreValid) {
  const PipelineConfig cfg;
  EXPECT_TRUE(cfg.problems().empty());
  EXPECT_NO_THROW(cfg.validate());
}

TEST(PipelineConfig, JsonRoundtripIsStable) {
  PipelineConfig cfg;
  cfg.seed = 77;
  cfg.simulation.rt60 = {0.2, 0.35};
  cfg.simulation.noise_field = NoiseField::kDiffuse;
  cfg.simulation.interpolation = DelayInterpolation::kWindowedSinc;
  cfg.simulation.speech_dir = "/data/speech";
  cfg.mask = nn::MaskKind::kCrm;
  cfg.steering = SteeringMode::kPca;
  cfg.loading = 0.25;
  cfg.train.steps = 17;
  cfg.beampattern.segments = 7;
  const std::string text = pipeline_config_json(cfg);
  const PipelineConfig back = parse_pipeline_config(text);
  EXPECT_EQ(pipeline_config_json(back), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.simulation.rt60.lo, 0.2);
  EXPECT_EQ(back.simulation.noise_field, NoiseField::kDiffuse);
  EXPECT_EQ(back.simulation.interpolation, DelayInterpolation::kWindowedSinc);
  EXPECT_EQ(back.simulation.speech_dir, fs::path("/data/speech"));
  EXPECT_EQ(back.mask, nn::MaskKind::kCrm);
  EXPECT_EQ(back.steering, SteeringMode::kPca);
  EXPECT_EQ(back.loading, 0.25);
  EXPECT_EQ(back.train.steps, 17);
  EXPECT_EQ(back.beampattern.segments, 7);

  testing::TempDir dir("cfg");
  save_pipeline_config(dir / "c.json", cfg);
  EXPECT_EQ(pipeline_config_json(load_pipeline_config(dir / "c.json")), text);
}

TEST(PipelineConfig, PartialDocumentsKeepDefaults) {
  const PipelineConfig cfg = parse_pipeline_config(R"({"seed": 5, "simulation": {"mic_spacing": 0.05}})");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.simulation.mic_spacing, 0.05);
  EXPECT_EQ(cfg.simulation.mic_count, PipelineConfig{}.simulation.mic_count);
  EXPECT_EQ(cfg.stft.fft_size, PipelineConfig{}.stft.fft_size);
}

TEST(PipelineConfig, RejectsUnknownKeysAndMalformedText) {
  EXPECT_THROW(parse_pipeline_config(R"({"sede": 1})"), InvalidArgument);
  EXPECT_THROW(parse_pipeline_config("{\"seed\": "), InvalidArgument);
  EXPECT_THROW(parse_pipeline_config("[1, 2]"), InvalidArgument);
  EXPECT_THROW(parse_pipeline_config(R"({"steering": "sideways"})"), InvalidArgument);
  EXPECT_THROW(parse_pipeline_config(R"({"simulation": {"rt60": [0.1]}})"), InvalidArgument);
  EXPECT_THROW(load_pipeline_config("/nonexistent/beamkit.json"), IoError);
}

TEST(PipelineConfig, ProblemsListsEveryViolation) {
  PipelineConfig cfg;
  cfg.loading = -1.0;
  cfg.train_scenes = 0;
  cfg.model.net.mics = 6;
  cfg.beampattern.max_hz = 9000.0;
  cfg.train.steps = 0;
  const auto problems = cfg.problems();
  EXPECT_TRUE(contains_prefix(problems, "loading"));
  EXPECT_TRUE(contains_prefix(problems, "train_scenes"));
  EXPECT_TRUE(contains_prefix(problems, "model.beamformer.mics"));
  EXPECT_TRUE(contains_prefix(problems, "beampattern.max_hz"));
  EXPECT_TRUE(contains_prefix(problems, "train"));
  try {
    cfg.validate();
    FAIL() << "validate accepted an invalid config";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.problems(), problems);
    for (const auto& p : problems) EXPECT_NE(std::string(e.what()).find(p), std::string::npos);
  }
}

TEST(PipelineConfig, BinCountMustMatchTheStft) {
  PipelineConfig cfg;
  cfg.stft.fft_size = 256;
  cfg.stft.window_len = 256;
  cfg.stft.hop = 128;
  EXPECT_TRUE(contains_prefix(cfg.problems(), "model.preseparator.bins"));
  cfg.model.pre.bins = 129;
  EXPECT_TRUE(cfg.problems().empty());
}

TEST(ApplyOverride, SetsNestedValues) {
  PipelineConfig cfg;
  apply_override(cfg, "seed=42");
  apply_override(cfg, "simulation.rt60=[0.3,0.4]");
  apply_override(cfg, "steering=pca");
  apply_override(cfg, "train.learning_rate=0.01");
  apply_override(cfg, "simulation.noise_field=diffuse");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.simulation.rt60.lo, 0.3);
  EXPECT_EQ(cfg.simulation.rt60.hi, 0.4);
  EXPECT_EQ(cfg.steering, SteeringMode::kPca);
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
  EXPECT_EQ(cfg.simulation.noise_field, NoiseField::kDiffuse);
}

TEST(ApplyOverride, RejectsBadAssignments) {
  PipelineConfig cfg;
  const std::string before = pipeline_config_json(cfg);
  EXPECT_THROW(apply_override(cfg, "seed"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "=3"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "simulation.rt6=[0.1,0.2]"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "simulation..rt60=1"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "mask=binary"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "seed=\"many\""), InvalidArgument);
  EXPECT_EQ(pipeline_config_json(cfg), before);
}

TEST(OutputTracker, RollbackRemovesOnlyWhatItCreated) {
  testing::TempDir dir("tracker");
  const fs::path keep = dir / "existing.txt";
  std::ofstream(keep) << "x";
  {
    OutputTracker t;
    t.make_dirs(dir.path() / "a" / "b");
    t.add_file(dir.path() / "a" / "b" / "f.txt");
    std::ofstream(dir.path() / "a" / "b" / "f.txt") << "y";
    t.add_file(keep);
    std::ofstream(keep) << "overwritten";
    EXPECT_EQ(t.files().size(), 2u);
  }
  EXPECT_FALSE(fs::exists(dir.path() / "a"));
  EXPECT_TRUE(fs::exists(keep));
}

TEST(OutputTracker, CommitKeepsEverything) {
  testing::TempDir dir("tracker");
  {
    OutputTracker t;
    t.make_dirs(dir.path() / "out");
    t.add_file(dir.path() / "out" / "f.txt");
    std::ofstream(dir.path() / "out" / "f.txt") << "y";
    t.commit();
  }
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "f.txt"));
}

TEST(OracleExtract, BeatsTheMixtureOnAverage) {
  // Single reverberant scenes can regress; the mean over several should not.
  PipelineConfig cfg = short_scenes();
  cfg.steering = SteeringMode::kPca;
  double gain = 0.0;
  constexpr int kScenes = 8;
  for (int i = 0; i < kScenes; ++i) {
    const MixtureScene scene = generate_scene(scene_seed(300, i), cfg.simulation);
    const int ref = scene.array.reference_mic;
    const auto target = ref_row(scene.target_reverberant, ref);
    const auto est = oracle_extract(scene, cfg);
    ASSERT_EQ(est.samples.rows(), 1);
    ASSERT_EQ(est.samples.cols(), scene.mixture.samples.cols());
    gain += si_sdr(ref_row(est, 0), target) - si_sdr(ref_row(scene.mixture, ref), target);
  }
  EXPECT_GT(gain / kScenes, 0.0);
}

TEST(OracleExtract, EveryMaskAndSteeringCombinationRuns) {
  PipelineConfig cfg = short_scenes(1.0);
  const MixtureScene scene = generate_scene(11, cfg.simulation);
  const int ref = scene.array.reference_mic;
  const auto target = ref_row(scene.target_reverberant, ref);
  const double mix = si_sdr(ref_row(scene.mixture, ref), target);
  for (auto mask : {nn::MaskKind::kIrm, nn::MaskKind::kCrm}) {
    for (auto steer : {SteeringMode::kDoa, SteeringMode::kPca}) {
      cfg.mask = mask;
      cfg.steering = steer;
      const auto est = oracle_extract(scene, cfg);
      EXPECT_TRUE(est.samples.allFinite());
      EXPECT_GT(si_sdr(ref_row(est, 0), target), mix - 3.0)
          << nn::to_string(mask) << "/" << to_string(steer);
    }
  }
}

TEST(RunSubcommands, SimulateExtractEvaluate) {
  testing::TempDir dir("pipeline");
  const PipelineConfig cfg = short_scenes(1.0);
  std::vector<fs::path> scenes;
  {
    OutputTracker t;
    scenes = run_simulate(cfg, 2, dir.path() / "scenes", t);
    t.commit();
  }
  ASSERT_EQ(scenes.size(), 2u);
  for (const auto& s : scenes) {
    EXPECT_EQ(s.filename(), kManifestName);
    for (const char* f : {"mixture.wav", "target.wav", "interference.wav", "noise.wav"}) {
      EXPECT_TRUE(fs::exists(s.parent_path() / f)) << f;
    }
  }
  EXPECT_EQ(read_manifest(scenes[1]).seed, scene_seed(cfg.seed, 1));

  std::vector<fs::path> outputs;
  {
    OutputTracker t;
    outputs = run_oracle_extract(cfg, scenes, dir.path() / "oracle", t);
    t.commit();
  }
  ASSERT_EQ(outputs.size(), 4u);
  std::ifstream in(dir.path() / "oracle" / "scene_000" / kExtractionManifestName);
  const auto doc = nlohmann::json::parse(in);
  EXPECT_EQ(doc.at("format"), "beamkit-extraction");
  EXPECT_EQ(doc.at("method"), "oracle-mvdr");

  const MetricReport est = evaluate_inputs({dir.path() / "oracle" / "scene_000", dir.path() / "oracle" / "scene_001"},
                                           EvaluationInput::kEstimate);
  const MetricReport mix = evaluate_inputs({scenes[0].parent_path(), scenes[1]}, EvaluationInput::kMixture);
  ASSERT_EQ(est.utterances.size(), 2u);
  EXPECT_EQ(mix.utterances[0].id, "scene_000");
  // The stored estimate was peak limited; SI-SDR ignores the gain.
  EXPECT_NEAR(est.utterances[0].si_sdr_db, doc.at("si_sdr_estimate_db").get<double>(), 1e-4);
  EXPECT_NEAR(mix.utterances[0].si_sdr_db, doc.at("si_sdr_mixture_db").get<double>(), 1e-4);

  const MixtureScene scene = read_scene(scenes[0]);
  const int ref = scene.array.reference_mic;
  EXPECT_EQ(mix.utterances[0].si_sdr_db,
            si_sdr(ref_row(scene.mixture, ref), ref_row(scene.target_reverberant, ref)));

  OutputTracker t;
  const auto reports = run_evaluate(cfg, {scenes[0]}, EvaluationInput::kMixture, dir.path() / "eval", t);
  t.commit();
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_TRUE(fs::exists(dir.path() / "eval" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "eval" / "metrics.json"));
}

TEST(RunSubcommands, FailedExtractionCanBeRolledBack) {
  testing::TempDir dir("pipeline");
  const PipelineConfig cfg = short_scenes(1.0);
  std::vector<fs::path> scenes;
  {
    OutputTracker t;
    scenes = run_simulate(cfg, 1, dir.path() / "scenes", t);
    t.commit();
  }
  scenes.push_back(dir.path() / "missing_scene");
  OutputTracker t;
  EXPECT_THROW(run_oracle_extract(cfg, scenes, dir.path() / "oracle", t), IoError);
  EXPECT_TRUE(fs::exists(dir.path() / "oracle" / "scene_000" / "estimate.wav"));
  t.rollback();
  EXPECT_FALSE(fs::exists(dir.path() / "oracle"));
  EXPECT_TRUE(fs::exists(scenes[0]));
}

TEST(RunSubcommands, BeamPatternCsvCoversTheGrid) {
  testing::TempDir dir("pipeline");
  PipelineConfig cfg = short_scenes(1.0);
  cfg.beampattern.angle_step_deg = 5.0;
  OutputTracker t;
  const auto scenes = run_simulate(cfg, 1, dir.path() / "scenes", t);
  const auto csv = run_beampattern(cfg, scenes[0], std::nullopt, dir.path() / "bp", t);
  t.commit();
  ASSERT_EQ(csv.size(), 1u);
  std::ifstream in(csv[0]);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 36);
  std::string row;
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  EXPECT_EQ(rows, 1);
}

TEST(EvaluateInputs, RejectsMissingOrForeignManifests) {
  testing::TempDir dir("pipeline");
  EXPECT_THROW(evaluate_inputs({}, EvaluationInput::kEstimate), InvalidArgument);
  EXPECT_THROW(evaluate_inputs({dir.path()}, EvaluationInput::kEstimate), IoError);
  std::ofstream(dir / kExtractionManifestName) << R"({"format": "something-else"})";
  EXPECT_THROW(evaluate_inputs({dir.path()}, EvaluationInput::kEstimate), IoError);
}

}  // namespace
}  // namespace beamkit
