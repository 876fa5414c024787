#include "relnet/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "relnet/gradcheck.hpp"
#include "relnet/ntsr.hpp"

namespace relnet {

namespace fs = std::filesystem;
using nlohmann::json;

void save_weights(const IntentModel& model, const std::string& path) {
  NtsrEntries entries;
  for (const auto& [name, t] : model.params) entries.emplace_back(name, t);
  ntsr_write(path, entries);
}

IntentModel load_weights(const std::string& path, const ModelConfig& cfg,
                         DType precision) {
  NtsrEntries entries = ntsr_read(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : entries) {
    if (!by_name.emplace(name, std::move(t)).second)
      throw ValidationError("weights file " + path + " repeats entry '" + name + "'");
  }

  IntentModel model;
  model.config = cfg;
  for (const auto& spec : param_manifest(cfg)) {
    auto it = by_name.find(spec.name);
    if (it == by_name.end())
      throw ValidationError("weights file " + path + " is missing parameter '" +
                            spec.name + "'");
    if (it->second.shape() != spec.shape)
      throw ValidationError("weights file " + path + ": parameter '" + spec.name +
                            "' has shape " + it->second.shape_str() +
                            ", config wants " + shape_to_string(spec.shape));
    model.params.insert(spec.name, it->second.astype(precision));
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    std::string extras;
    for (const auto& [name, _] : by_name) extras += " '" + name + "'";
    throw ValidationError("weights file " + path + " has unexpected entries:" +
                          extras);
  }
  return model;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.find('/') != std::string::npos)
    fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << text;
}

std::vector<PedestrianSequence> generate_all(const RunConfig& cfg) {
  std::vector<PedestrianSequence> seqs;
  seqs.reserve(static_cast<size_t>(cfg.num_sequences));
  for (int64_t i = 0; i < cfg.num_sequences; ++i)
    seqs.push_back(generate_scenario(cfg.scenario, i));
  return seqs;
}

}  // namespace

void run_gen(const RunConfig& cfg) {
  write_dataset(cfg.io.dataset_dir, generate_all(cfg));
}

void run_train(const RunConfig& cfg) {
  auto sequences = read_dataset(cfg.io.dataset_dir);
  SampleSet samples = prepare_samples(sequences, cfg.sampling, cfg.train);
  auto [model, history] = train_model(cfg.model, cfg.train, samples);
  save_weights(model, cfg.io.weights_path);

  json h{{"config_hash", config_hash(cfg)},
         {"seed", cfg.train.seed},
         {"train_loss", history.train_loss}};
  h["val_metrics"] = json::array();
  for (const auto& m : history.val_metrics)
    h["val_metrics"].push_back(json::parse(m.to_json()));
  write_text(cfg.io.history_path, h.dump(2) + "\n");
}

MetricsReport run_eval(const RunConfig& cfg) {
  IntentModel model =
      load_weights(cfg.io.weights_path, cfg.model, cfg.train.precision);
  auto sequences = read_dataset(cfg.io.dataset_dir);
  SampleSet samples = prepare_samples(sequences, cfg.sampling, cfg.train);
  if (samples.test.empty())
    throw ValidationError("eval: the test split holds no observation windows");
  MetricsReport report = evaluate(model, samples.test, cfg.train.threshold);

  json r = json::parse(report.to_json());
  r["config_hash"] = config_hash(cfg);
  r["seed"] = cfg.train.seed;
  write_text(cfg.io.report_path, r.dump(2) + "\n");
  write_text(cfg.io.report_path + ".csv", MetricsReport::csv_header() + "\n" +
                                              report.csv_row("test") + "\n");
  return report;
}

AblationReport run_ablate(const RunConfig& cfg) {
  auto sequences = read_dataset(cfg.io.dataset_dir);
  SampleSet samples = prepare_samples(sequences, cfg.sampling, cfg.train);
  AblationReport report = ablation_compare(cfg.model, cfg.train, samples);
  write_text(cfg.io.report_path, report.to_json(config_hash(cfg)) + "\n");
  return report;
}

bool run_gradcheck(bool verbose) {
  GradSuiteResult r = run_gradient_suite();
  if (verbose) {
    std::printf("gradcheck relation:    max rel err %.3e over %lld elements "
                "(fixture %d) %s\n",
                r.relation.max_rel_err,
                static_cast<long long>(r.relation.elements),
                r.relation.fixture_attempt, r.relation.pass ? "PASS" : "FAIL");
    std::printf("gradcheck no_relation: max rel err %.3e over %lld elements "
                "(fixture %d) %s\n",
                r.baseline.max_rel_err,
                static_cast<long long>(r.baseline.elements),
                r.baseline.fixture_attempt, r.baseline.pass ? "PASS" : "FAIL");
  }
  return r.pass;
}

}  // namespace relnet
