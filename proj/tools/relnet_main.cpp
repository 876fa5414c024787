#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "relnet/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::string preset;
  std::string variant;
  int64_t seed = -1;
  double threshold = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration");
  cmd->add_option("--out", args.out, "output path (dataset dir, weights or report)");
  cmd->add_option("--seed", args.seed, "override the training seed");
  cmd->add_option("--preset", args.preset, "pie (overlap 0.6) or jaad (overlap 0.8)")
      ->check(CLI::IsMember({"pie", "jaad"}));
  cmd->add_option("--variant", args.variant, "relation or no_relation")
      ->check(CLI::IsMember({"relation", "no_relation"}));
  cmd->add_option("--threshold", args.threshold, "classification threshold");
}

relnet::RunConfig resolve_config(const CommonArgs& args, const char* subcommand) {
  relnet::RunConfig cfg = args.config_path.empty()
                              ? relnet::default_run_config()
                              : relnet::load_config(args.config_path);
  if (!args.preset.empty()) relnet::apply_preset(cfg, args.preset);
  if (args.seed >= 0) cfg.train.seed = static_cast<uint64_t>(args.seed);
  if (!args.variant.empty()) cfg.model.variant = relnet::parse_variant(args.variant);
  if (args.threshold >= 0.0) cfg.train.threshold = args.threshold;
  if (!args.out.empty()) {
    const std::string sub(subcommand);
    if (sub == "gen") cfg.io.dataset_dir = args.out;
    else if (sub == "train") cfg.io.weights_path = args.out;
    else cfg.io.report_path = args.out;
  }

  const char* precision = std::getenv("RELNET_PRECISION");
  if (precision != nullptr) {
    const std::string p(precision);
    if (p == "f32") cfg.train.precision = relnet::DType::f32;
    else if (p == "f64") {
      cfg.train.precision = relnet::DType::f64;
      relnet::set_finite_checks(true);
    } else {
      throw relnet::ValidationError("RELNET_PRECISION must be f32 or f64, got '" +
                                    p + "'");
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-conditioned relation network for crossing-intent "
               "prediction"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "train and save weights + history");
  CLI::App* eval = app.add_subcommand("eval", "evaluate saved weights on the test split");
  CLI::App* ablate =
      app.add_subcommand("ablate", "train both variants and compare test metrics");
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of all gradients (f64)");
  for (CLI::App* cmd : {gen, train, eval, ablate, gradcheck}) add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  try {
    const char* sub = app.get_subcommands().front()->get_name().c_str();
    relnet::RunConfig cfg = resolve_config(args, sub);
    if (gen->parsed()) {
      relnet::run_gen(cfg);
      std::printf("wrote %lld sequences to %s\n",
                  static_cast<long long>(cfg.num_sequences),
                  cfg.io.dataset_dir.c_str());
    } else if (train->parsed()) {
      relnet::run_train(cfg);
      std::printf("weights: %s\nhistory: %s\n", cfg.io.weights_path.c_str(),
                  cfg.io.history_path.c_str());
    } else if (eval->parsed()) {
      relnet::MetricsReport r = relnet::run_eval(cfg);
      std::printf("%s\n%s\n", relnet::MetricsReport::csv_header().c_str(),
                  r.csv_row("test").c_str());
      std::printf("report: %s\n", cfg.io.report_path.c_str());
    } else if (ablate->parsed()) {
      relnet::AblationReport r = relnet::run_ablate(cfg);
      std::printf("%s", r.table_text().c_str());
      std::printf("report: %s\n", cfg.io.report_path.c_str());
    } else if (gradcheck->parsed()) {
      if (!relnet::run_gradcheck()) return 3;
    }
    return 0;
  } catch (const relnet::VerificationError& e) {
    std::fprintf(stderr, "verification failed: %s\n", e.what());
    return 3;
  } catch (const relnet::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const relnet::ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
