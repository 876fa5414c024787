// Acceptance suite: each criterion prints one PASS/FAIL line and the binary
// exits nonzero if any requested criterion fails. Run with a list of
// criterion numbers (1..8) or no arguments for all.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "relnet/gradcheck.hpp"
#include "relnet/ntsr.hpp"
#include "relnet/pipeline.hpp"
#include "relnet/rng.hpp"
#include "relnet/run_config.hpp"
#include "relnet/tape.hpp"

using namespace relnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor random_tensor(std::vector<int64_t> shape, RngStream& rs, double lo,
                     double hi, DType dt) {
  Tensor t = Tensor::zeros(std::move(shape), dt);
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rs.uniform(lo, hi));
  return t;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("missing " + path);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

// ---- criterion 1: gradient suite -----------------------------------------

Outcome criterion1() {
  GradSuiteResult r = run_gradient_suite(1e-3, 1e-4);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "relation max rel err %.3e, no_relation %.3e over %lld+%lld elements",
                r.relation.max_rel_err, r.baseline.max_rel_err,
                static_cast<long long>(r.relation.elements),
                static_cast<long long>(r.baseline.elements));
  return {r.pass, buf};
}

// ---- criterion 2: relation permutation invariance -------------------------

Outcome criterion2() {
  double worst_f32 = 0.0, worst_f64 = 0.0;
  for (DType dt : {DType::f32, DType::f64}) {
    ModelConfig cfg;
    cfg.tau = 4;
    cfg.frame_h = cfg.frame_w = 48;
    cfg.backbone_blocks = {{8, 2}, {8, 2}, {8, 2}};  // 6x6 cells
    cfg.c = 8;
    cfg.traj_hidden = 16;
    cfg.relation_dim = 16;
    cfg.classifier_hidden = {16};
    const int64_t K = cfg.cells(), c = cfg.c;
    for (int inst = 0; inst < 100; ++inst) {
      IntentModel m = init_intent_model(cfg, 4000 + static_cast<uint64_t>(inst), dt);
      RngStream rs = Rng(4100).stream("inv", static_cast<uint64_t>(inst));
      Tensor f_st = random_tensor({cfg.feat_h(), cfg.feat_w(), c}, rs, -1, 1, dt);
      Tensor q = random_tensor({cfg.traj_hidden}, rs, -1, 1, dt);
      std::vector<int64_t> perm(static_cast<size_t>(K));
      for (int64_t k = 0; k < K; ++k) perm[static_cast<size_t>(k)] = k;
      rs.shuffle(perm);
      Tensor shuffled = Tensor::zeros(f_st.shape(), dt);
      for (int64_t k = 0; k < K; ++k)
        for (int64_t ch = 0; ch < c; ++ch)
          shuffled.set(k * c + ch, f_st.at(perm[static_cast<size_t>(k)] * c + ch));
      Tape t1, t2;
      const Tensor a = t1.value(relation_forward(t1, m, t1.leaf(f_st), t1.leaf(q)));
      const Tensor b =
          t2.value(relation_forward(t2, m, t2.leaf(shuffled), t2.leaf(q)));
      double dev = 0.0;
      for (int64_t i = 0; i < a.size(); ++i)
        dev = std::max(dev, std::abs(a.at(i) - b.at(i)));
      (dt == DType::f32 ? worst_f32 : worst_f64) =
          std::max(dt == DType::f32 ? worst_f32 : worst_f64, dev);
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "max deviation f32 %.3e (<=1e-4), f64 %.3e (<=1e-10)",
                worst_f32, worst_f64);
  return {worst_f32 <= 1e-4 && worst_f64 <= 1e-10, buf};
}

// ---- criterion 3: loss oracles --------------------------------------------

Outcome criterion3() {
  const double at_zero =
      bce_loss(Tensor::from({1}, {0.0}, DType::f64), Tensor::from({1}, {1.0}, DType::f64));
  const double ln2_err = std::abs(at_zero - std::log(2.0));
  double worst = 0.0;
  RngStream rs = Rng(4300).stream("bce");
  for (int i = 0; i < 10000; ++i) {
    const double l = rs.uniform(-10, 10);
    const double y = rs.bernoulli(0.5) ? 1.0 : 0.0;
    const double p = 1.0 / (1.0 + std::exp(-l));
    if (p < 1e-6 || p > 1.0 - 1e-6) continue;
    const double naive = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    const double stable = bce_loss(Tensor::from({1}, {l}, DType::f64),
                                   Tensor::from({1}, {y}, DType::f64));
    worst = std::max(worst, std::abs(naive - stable));
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "ln2 error %.2e (<1e-9), logit-vs-naive %.2e (<1e-6)",
                ln2_err, worst);
  return {ln2_err < 1e-9 && worst < 1e-6, buf};
}

// ---- criterion 4: metric oracles -------------------------------------------

Outcome criterion4() {
  RngStream rs = Rng(4400).stream("metrics");
  int auc_exact = 0;
  const int auc_trials = 1000;
  for (int trial = 0; trial < auc_trials; ++trial) {
    const int n = static_cast<int>(rs.uniform_int(2, 60));
    std::vector<double> s;
    std::vector<int> y;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      s.push_back(rs.uniform_int(0, 12) / 12.0);  // ties are frequent
      y.push_back(rs.bernoulli(0.5) ? 1 : 0);
      pos += y.back();
    }
    if (pos == 0 || pos == n) {
      ++auc_exact;  // out of compute_auc's domain; nothing to compare
      continue;
    }
    double won = 0;
    int64_t pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        ++pairs;
        won += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    if (compute_auc(s, y) == won / static_cast<double>(pairs)) ++auc_exact;
  }

  int conf_exact = 0;
  const int conf_trials = 100;
  for (int trial = 0; trial < conf_trials; ++trial) {
    const int n = static_cast<int>(rs.uniform_int(1, 40));
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(rs.next_double());
      y.push_back(rs.bernoulli(0.5) ? 1 : 0);
    }
    MetricsReport r = metrics_from_scores(s, y, 0.5);
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;  // independent hand count
    for (int i = 0; i < n; ++i) {
      const bool pred = s[i] >= 0.5;
      if (pred && y[i] == 1) ++tp;
      if (pred && y[i] == 0) ++fp;
      if (!pred && y[i] == 1) ++fn;
      if (!pred && y[i] == 0) ++tn;
    }
    const bool counts_ok = tp == r.tp && fp == r.fp && tn == r.tn && fn == r.fn &&
                           r.tp + r.fp + r.tn + r.fn == r.n;
    const double acc = static_cast<double>(tp + tn) / n;
    const double prec = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    if (counts_ok && acc == r.accuracy && prec == r.precision && rec == r.recall &&
        f1 == r.f1)
      ++conf_exact;
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "auc exact %d/%d, confusion exact %d/%d",
                auc_exact, auc_trials, conf_exact, conf_trials);
  return {auc_exact == auc_trials && conf_exact == conf_trials, buf};
}

// ---- criterion 5: subsampler oracle ----------------------------------------

PedestrianSequence bare_sequence(int64_t T, int64_t event) {
  PedestrianSequence seq;
  seq.id = "track";
  seq.event_frame = event;
  seq.crossing = true;
  seq.frames = Tensor::zeros({T, 1, 1, 1}, DType::f32);
  for (int64_t t = 0; t < T; ++t)
    seq.trajectory.push_back({static_cast<float>(t), 0.5f, 1.0f, 1.0f});
  return seq;
}

Outcome criterion5() {
  PedestrianSequence worked = bare_sequence(100, 90);
  auto ws = subsample_tte(worked, 16, 0.8, 30, 60);
  bool worked_ok = ws.size() == 11;
  for (size_t i = 0; i < ws.size() && worked_ok; ++i)
    worked_ok = ws[i].t_last == 30 + 3 * static_cast<int64_t>(i);

  RngStream rs = Rng(4500).stream("tracks");
  int exact = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    const int64_t T = rs.uniform_int(1, 140);
    const int64_t event = rs.uniform_int(0, T - 1);
    const int64_t tau = rs.uniform_int(1, 24);
    const double overlap = rs.uniform(0.0, 0.999);
    const int64_t tte_min = rs.uniform_int(0, 80);
    const int64_t tte_max = tte_min + rs.uniform_int(0, 60);
    PedestrianSequence seq = bare_sequence(T, event);
    auto got = subsample_tte(seq, tau, overlap, tte_min, tte_max);

    // brute-force enumerator over every frame index
    const int64_t stride = std::max<int64_t>(
        1, static_cast<int64_t>(
               std::floor(static_cast<double>(tau) * (1.0 - overlap) + 0.5)));
    std::vector<int64_t> eligible;
    for (int64_t t = 0; t < T; ++t)
      if (t >= tau - 1 && event - t >= tte_min && event - t <= tte_max)
        eligible.push_back(t);
    std::vector<int64_t> expect;
    for (int64_t t : eligible)
      if ((t - eligible.front()) % stride == 0) expect.push_back(t);

    bool ok = got.size() == expect.size();
    for (size_t i = 0; i < got.size() && ok; ++i)
      ok = got[i].t_last == expect[i] && got[i].tte == event - expect[i] &&
           got[i].frames.dim(0) == tau;
    if (ok) ++exact;
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "worked example %s, oracle exact %d/%d",
                worked_ok ? "ok" : "wrong", exact, trials);
  return {worked_ok && exact == trials, buf};
}

// ---- criterion 6: overfit check --------------------------------------------

ScenarioParams miniature_scenario(uint64_t seed) {
  ScenarioParams p;
  p.scene_w = 8;
  p.scene_h = 8;
  p.track_len = 100;
  p.num_vehicles_min = 1;
  p.num_vehicles_max = 1;
  p.d_near = 2.5;
  p.seed = seed;
  return p;
}

Outcome criterion6() {
  ScenarioParams p = miniature_scenario(600);
  SamplingConfig sampling;
  sampling.tau = 4;
  sampling.overlap = 0.8;
  SampleSet ss;
  for (int64_t i = 0; ss.train.size() < 64; ++i) {
    auto windows = subsample_tte(generate_scenario(p, i), sampling.tau,
                                 sampling.overlap, sampling.tte_min,
                                 sampling.tte_max);
    for (auto& w : windows) {
      if (ss.train.size() >= 64) break;
      ss.train.push_back(std::move(w));
    }
  }
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 16;
  tc.optim.kind = OptimKind::adam;
  tc.optim.lr = 1e-3;
  tc.seed = 61;
  auto [model, history] = train_model(miniature_config(Variant::relation), tc, ss);
  const double acc = evaluate(model, ss.train, 0.5).accuracy;
  char buf[120];
  std::snprintf(buf, sizeof(buf), "training accuracy %.3f (>=0.95) after %lld epochs",
                acc, static_cast<long long>(tc.epochs));
  return {acc >= 0.95, buf};
}

// ---- criterion 7: directional ablation --------------------------------------

struct AblationData {
  SampleSet samples;
};

// windows are materialized and sequences dropped as they stream through
AblationData build_ablation_data(int64_t n_tracks, const SamplingConfig& sampling,
                                 uint64_t data_seed) {
  ScenarioParams p;  // default scenario parameters
  p.seed = data_seed;

  std::vector<PedestrianSequence> stubs;
  std::vector<std::vector<ObservationSample>> windows_by_track;
  for (int64_t i = 0; i < n_tracks; ++i) {
    PedestrianSequence seq = generate_scenario(p, i);
    windows_by_track.push_back(subsample_tte(seq, sampling.tau, sampling.overlap,
                                             sampling.tte_min, sampling.tte_max));
    PedestrianSequence stub;
    stub.id = seq.id;
    stubs.push_back(std::move(stub));
  }
  SplitIds ids = split_dataset(stubs, 0.72, 0.08, 0.2, data_seed);
  const std::set<std::string> train_ids(ids.train.begin(), ids.train.end());
  const std::set<std::string> val_ids(ids.val.begin(), ids.val.end());

  AblationData out;
  for (auto& windows : windows_by_track)
    for (auto& w : windows) {
      auto& dst = train_ids.count(w.source_id) ? out.samples.train
                  : val_ids.count(w.source_id) ? out.samples.val
                                               : out.samples.test;
      dst.push_back(std::move(w));
    }
  return out;
}

ModelConfig ablation_model_config() {
  ModelConfig cfg;
  cfg.tau = 16;
  cfg.frame_channels = 3;
  cfg.frame_h = cfg.frame_w = 48;
  cfg.backbone_blocks = {{8, 2}, {16, 2}, {16, 2}};
  cfg.c = 16;
  cfg.traj_hidden = 48;
  cfg.relation_dim = 48;
  cfg.classifier_hidden = {64};
  return cfg;
}

Outcome criterion7() {
  SamplingConfig sampling;  // tau 16, overlap 0.8, tte 30..60
  AblationData data = build_ablation_data(280, sampling, 700);
  const size_t n_train = data.samples.train.size();
  const size_t n_test = data.samples.test.size();
  if (n_train < 2000 || n_test < 500) {
    char buf[120];
    std::snprintf(buf, sizeof(buf), "dataset too small: %zu train / %zu test",
                  n_train, n_test);
    return {false, buf};
  }

  ModelConfig cfg = ablation_model_config();
  int relation_wins = 0;
  int64_t rel_params = 0, base_params = 0;
  std::string per_seed;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 32;
    tc.optim.kind = OptimKind::adam;
    tc.optim.lr = 1e-3;
    tc.seed = seed;
    AblationReport r = ablation_compare(cfg, tc, data.samples);
    rel_params = r.relation_param_count;
    base_params = r.baseline_param_count;
    if (r.relation.f1 >= r.baseline.f1) ++relation_wins;
    char line[100];
    std::snprintf(line, sizeof(line), "\n    seed %llu: relation F1 %.4f vs %.4f",
                  static_cast<unsigned long long>(seed), r.relation.f1,
                  r.baseline.f1);
    per_seed += line;
  }
  const bool params_ok = base_params > rel_params;
  char buf[360];
  std::snprintf(buf, sizeof(buf),
                "%zu train / %zu test; relation F1 wins %d/5 (need >=4); params "
                "%lld > %lld %s%s",
                n_train, n_test, relation_wins, static_cast<long long>(base_params),
                static_cast<long long>(rel_params), params_ok ? "ok" : "VIOLATED",
                per_seed.c_str());
  return {relation_wins >= 4 && params_ok, buf};
}

// ---- criterion 8: reproducibility -------------------------------------------

RunConfig repro_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.scenario.scene_w = cfg.scenario.scene_h = 16;
  cfg.scenario.track_len = 100;
  cfg.scenario.d_near = 5.0;
  cfg.scenario.seed = 800;
  cfg.num_sequences = 8;
  cfg.sampling.tau = 4;
  cfg.sampling.tte_min = 30;
  cfg.sampling.tte_max = 45;
  cfg.model.tau = 4;
  cfg.model.frame_h = cfg.model.frame_w = 16;
  cfg.model.backbone_blocks = {{8, 2}, {8, 2}};
  cfg.model.c = 8;
  cfg.model.traj_hidden = 16;
  cfg.model.relation_dim = 16;
  cfg.model.classifier_hidden = {16};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.seed = 81;
  cfg.io.dataset_dir = (dir / "data").string();
  cfg.io.weights_path = (dir / "weights.ntsr").string();
  cfg.io.report_path = (dir / "report.json").string();
  cfg.io.history_path = (dir / "history.json").string();
  return cfg;
}

Outcome criterion8() {
  const fs::path root =
      fs::temp_directory_path() / ("relnet_accept8_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg = repro_config(root);

  run_gen(cfg);
  run_train(cfg);
  run_eval(cfg);
  const std::string w1 = read_bytes(cfg.io.weights_path);
  const std::string h1 = read_bytes(cfg.io.history_path);
  const std::string r1 = read_bytes(cfg.io.report_path);

  fs::remove(cfg.io.weights_path);
  fs::remove(cfg.io.history_path);
  fs::remove(cfg.io.report_path);
  fs::remove_all(cfg.io.dataset_dir);

  run_gen(cfg);
  run_train(cfg);
  run_eval(cfg);
  const bool reruns_identical = read_bytes(cfg.io.weights_path) == w1 &&
                                read_bytes(cfg.io.history_path) == h1 &&
                                read_bytes(cfg.io.report_path) == r1;

  // dataset roundtrip: rewriting what was read reproduces every byte
  auto sequences = read_dataset(cfg.io.dataset_dir);
  const fs::path copy_dir = root / "data_copy";
  write_dataset(copy_dir.string(), sequences);
  bool roundtrip_ok = true;
  for (const auto& entry : fs::directory_iterator(cfg.io.dataset_dir)) {
    const std::string name = entry.path().filename().string();
    if (read_bytes(entry.path().string()) !=
        read_bytes((copy_dir / name).string()))
      roundtrip_ok = false;
  }

  // NTSR roundtrip on random tensors
  RngStream rs = Rng(4800).stream("ntsr");
  NtsrEntries entries;
  for (int e = 0; e < 5; ++e) {
    Tensor t = Tensor::zeros({rs.uniform_int(1, 6), rs.uniform_int(1, 6)},
                             DType::f32);
    for (int64_t i = 0; i < t.size(); ++i) t.set(i, rs.uniform(-50, 50));
    entries.emplace_back("t" + std::to_string(e), std::move(t));
  }
  const std::string npath = (root / "x.ntsr").string();
  ntsr_write(npath, entries);
  NtsrEntries back = ntsr_read(npath);
  bool ntsr_ok = back.size() == entries.size();
  for (size_t i = 0; i < entries.size() && ntsr_ok; ++i)
    ntsr_ok = back[i].first == entries[i].first &&
              back[i].second.bit_equal(entries[i].second);

  // the emitted reports must embed the config hash and seed
  const bool stamped = r1.find(config_hash(cfg)) != std::string::npos &&
                       h1.find(config_hash(cfg)) != std::string::npos;

  fs::remove_all(root);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "reruns byte-identical: %s; dataset roundtrip: %s; ntsr roundtrip: "
                "%s; reports stamped: %s",
                reruns_identical ? "yes" : "NO", roundtrip_ok ? "yes" : "NO",
                ntsr_ok ? "yes" : "NO", stamped ? "yes" : "NO");
  return {reruns_identical && roundtrip_ok && ntsr_ok && stamped, buf};
}

const char* kDescriptions[9] = {
    "",
    "gradient suite (miniature config, both variants, f64, rel err < 1e-4)",
    "relation invariance under cell permutations (f32 1e-4, f64 1e-10)",
    "loss oracles (bce at 0 = ln 2; logit vs naive form)",
    "metric oracles (rank AUC vs brute force; confusion counts)",
    "subsampler vs brute-force window enumerator",
    "overfit 64 samples to >= 0.95 training accuracy",
    "directional ablation over 5 seeds (relation F1 >= baseline in >= 4)",
    "bit-exact reproducibility and container roundtrips",
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::function<Outcome()> criteria[9] = {
      nullptr,    criterion1, criterion2, criterion3, criterion4,
      criterion5, criterion6, criterion7, criterion8};

  bool all_pass = true;
  for (int c : wanted) {
    if (c < 1 || c > 8) {
      std::fprintf(stderr, "unknown criterion %d\n", c);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[c]();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1fs)\n    %s\n",
                out.pass ? "PASS" : "FAIL", c, kDescriptions[c], secs,
                out.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
