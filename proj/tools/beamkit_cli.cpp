// beamkit command line: simulate, oracle-extract, train, infer, evaluate,
// beampattern.
//
// Exit status: 0 success, 1 invalid arguments or configuration, 2 failure
// while running. Files a failed run created are removed.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beamkit/error.hpp"
#include "beamkit/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Args {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out = "out";
  int count = 1;
  std::optional<std::string> steering;
  std::optional<std::string> mask;
  std::optional<std::string> checkpoint;
  std::string input = "estimate";
  std::vector<std::string> paths;
  bool dump_features = false;
};

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beamkit: multichannel target speech extraction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Args args;
  app.add_option("--config", args.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", args.seed, "Base seed");
  app.add_option("--set", args.overrides, "Config override key=value (repeatable)");
  app.add_option("--out", args.out, "Output directory")->capture_default_str();
  app.add_option("--steering", args.steering, "Steering for oracle MVDR")
      ->check(CLI::IsMember({"doa", "pca"}));
  app.add_option("--mask", args.mask, "Oracle mask kind")->check(CLI::IsMember({"irm", "crm"}));

  auto* simulate = app.add_subcommand("simulate", "Generate scenes with manifests");
  simulate->add_option("--count", args.count, "Number of scenes")->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle-extract", "Oracle mask -> covariances -> MVDR");
  oracle->add_option("scenes", args.paths, "Scene directories or manifests")->required();
  oracle->add_flag("--dump-features", args.dump_features, "Also write each scene's feature tensor");

  auto* train = app.add_subcommand("train", "Train the toy neural beamformer end to end");
  train->add_option("scenes", args.paths, "Scene directories (default: generate)");

  auto* infer = app.add_subcommand("infer", "Run a trained checkpoint on scenes");
  infer->add_option("--checkpoint", args.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("scenes", args.paths, "Scene directories or manifests")->required();
  infer->add_flag("--dump-features", args.dump_features, "Also write each scene's feature tensor");

  auto* evaluate = app.add_subcommand("evaluate", "SI-SDR and STOI reports");
  evaluate->add_option("inputs", args.paths, "Extraction outputs, or scenes with --input mixture")
      ->required();
  evaluate->add_option("--input", args.input, "What to score")
      ->check(CLI::IsMember({"estimate", "mixture"}))
      ->capture_default_str();

  auto* pattern = app.add_subcommand("beampattern", "Beam pattern CSV for a scene");
  pattern->add_option("scene", args.paths, "Scene directory or manifest")->required()->expected(1);
  pattern->add_option("--checkpoint", args.checkpoint, "Use a trained model's frame-level weights")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  beamkit::PipelineConfig cfg;
  try {
    if (args.config) cfg = beamkit::load_pipeline_config(*args.config);
    for (const auto& o : args.overrides) beamkit::apply_override(cfg, o);
    if (args.seed) cfg.seed = *args.seed;
    if (args.steering) cfg.steering = beamkit::parse_steering(*args.steering);
    if (args.mask) cfg.mask = beamkit::nn::parse_mask_kind(*args.mask);
    cfg.validate();
  } catch (const beamkit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  beamkit::OutputTracker tracker;
  try {
    const fs::path out = args.out;
    std::vector<fs::path> artifacts;
    if (*simulate) {
      artifacts = beamkit::run_simulate(cfg, args.count, out, tracker);
    } else if (*oracle) {
      artifacts = beamkit::run_oracle_extract(cfg, as_paths(args.paths), out, tracker,
                                              args.dump_features);
    } else if (*train) {
      artifacts = beamkit::run_train(cfg, as_paths(args.paths), out, tracker);
    } else if (*infer) {
      artifacts = beamkit::run_infer(cfg, *args.checkpoint, as_paths(args.paths), out, tracker,
                                     args.dump_features);
    } else if (*evaluate) {
      const auto kind = args.input == "mixture" ? beamkit::EvaluationInput::kMixture
                                                : beamkit::EvaluationInput::kEstimate;
      artifacts = beamkit::run_evaluate(cfg, as_paths(args.paths), kind, out, tracker);
    } else if (*pattern) {
      std::optional<fs::path> ck;
      if (args.checkpoint) ck = *args.checkpoint;
      artifacts = beamkit::run_beampattern(cfg, args.paths.front(), ck, out, tracker);
    }
    tracker.commit();
    for (const auto& a : artifacts) std::cout << a.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    tracker.rollback();
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
