#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <set>

#include "relnet/data.hpp"
#include "relnet/rng.hpp"

using namespace relnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("relnet_data_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// bare sequence for subsampler tests; frames carry the frame index so window
// slicing can be verified
PedestrianSequence synthetic_sequence(int64_t T, int64_t event_frame) {
  PedestrianSequence seq;
  seq.id = "synthetic";
  seq.event_frame = event_frame;
  seq.crossing = true;
  seq.frames = Tensor::zeros({T, 1, 2, 2}, DType::f32);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t i = 0; i < 4; ++i)
      seq.frames.set(t * 4 + i, static_cast<double>(t));
  for (int64_t t = 0; t < T; ++t)
    seq.trajectory.push_back({static_cast<float>(t), 1.0f, 2.0f, 3.0f});
  return seq;
}

// independent enumerator: test every frame index against the eligibility
// predicate, then keep stride-aligned ones
std::vector<int64_t> enumerate_t_last(int64_t T, int64_t event, int64_t tau,
                                      double overlap, int64_t tte_min,
                                      int64_t tte_max) {
  const int64_t stride = std::max<int64_t>(
      1, static_cast<int64_t>(
             std::floor(static_cast<double>(tau) * (1.0 - overlap) + 0.5)));
  std::vector<int64_t> eligible;
  for (int64_t t = 0; t < T; ++t) {
    const int64_t tte = event - t;
    if (t >= tau - 1 && tte >= tte_min && tte <= tte_max) eligible.push_back(t);
  }
  std::vector<int64_t> out;
  for (int64_t t : eligible)
    if ((t - eligible.front()) % stride == 0) out.push_back(t);
  return out;
}

ScenarioParams tiny_params() {
  ScenarioParams p;
  p.scene_w = 16;
  p.scene_h = 16;
  p.track_len = 40;
  p.d_near = 5.0;
  return p;
}

}  // namespace

TEST_CASE("subsample worked example: 11 windows, stride 3") {
  PedestrianSequence seq = synthetic_sequence(100, 90);
  auto samples = subsample_tte(seq, 16, 0.8, 30, 60);
  REQUIRE(samples.size() == 11);
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].t_last == 30 + 3 * static_cast<int64_t>(i));
    CHECK(samples[i].tte == 90 - samples[i].t_last);
    CHECK(samples[i].frames.shape() == std::vector<int64_t>{16, 1, 2, 2});
    // window really ends at t_last (frames carry their index)
    CHECK(samples[i].frames.at(15 * 4) == static_cast<double>(samples[i].t_last));
    CHECK(samples[i].label == 1);
    CHECK(samples[i].source_id == "synthetic");
  }
}

TEST_CASE("subsample stride for overlap 0.6 is 6") {
  PedestrianSequence seq = synthetic_sequence(100, 90);
  auto samples = subsample_tte(seq, 16, 0.6, 30, 60);
  REQUIRE(samples.size() == 6);
  for (size_t i = 0; i < samples.size(); ++i)
    CHECK(samples[i].t_last == 30 + 6 * static_cast<int64_t>(i));
}

TEST_CASE("subsample returns empty when constraints are infeasible") {
  PedestrianSequence seq = synthetic_sequence(100, 10);
  CHECK(subsample_tte(seq, 16, 0.8, 30, 60).empty());
}

TEST_CASE("subsample rejects invalid arguments") {
  PedestrianSequence seq = synthetic_sequence(50, 40);
  CHECK_THROWS_AS(subsample_tte(seq, 0, 0.8, 30, 60), ValidationError);
  CHECK_THROWS_AS(subsample_tte(seq, 16, 1.0, 30, 60), ValidationError);
  CHECK_THROWS_AS(subsample_tte(seq, 16, 0.8, 40, 30), ValidationError);
}

TEST_CASE("subsampler equals the brute-force enumerator on random tracks") {
  RngStream rs = Rng(3001).stream("subsample.oracle");
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t T = rs.uniform_int(1, 120);
    const int64_t event = rs.uniform_int(0, T - 1);
    const int64_t tau = rs.uniform_int(1, 20);
    const double overlap = rs.uniform(0.0, 0.999);
    const int64_t tte_min = rs.uniform_int(0, 70);
    const int64_t tte_max = tte_min + rs.uniform_int(0, 50);
    PedestrianSequence seq = synthetic_sequence(T, event);
    auto samples = subsample_tte(seq, tau, overlap, tte_min, tte_max);
    auto expect = enumerate_t_last(T, event, tau, overlap, tte_min, tte_max);
    REQUIRE(samples.size() == expect.size());
    for (size_t i = 0; i < samples.size(); ++i) {
      CHECK(samples[i].t_last == expect[i]);
      CHECK(samples[i].tte == event - expect[i]);
      CHECK(samples[i].tte >= tte_min);
      CHECK(samples[i].tte <= tte_max);
      CHECK(samples[i].frames.dim(0) == tau);
      for (int64_t b = 0; b < samples[i].boxes_norm.size(); ++b) {
        CHECK(samples[i].boxes_norm.at(b) >= 0.0);
        CHECK(samples[i].boxes_norm.at(b) <= 1.0);
      }
    }
  }
}

TEST_CASE("generate_scenario is deterministic in (seed, index)") {
  ScenarioParams p = tiny_params();
  PedestrianSequence a = generate_scenario(p, 7);
  PedestrianSequence b = generate_scenario(p, 7);
  CHECK(a.frames.bit_equal(b.frames));
  CHECK(a.crossing == b.crossing);
  CHECK(a.event_frame == b.event_frame);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].u == b.trajectory[i].u);
    CHECK(a.trajectory[i].v == b.trajectory[i].v);
  }
  PedestrianSequence c = generate_scenario(p, 8);
  CHECK_FALSE(a.frames.bit_equal(c.frames));
}

TEST_CASE("zero vehicles forces the no-conflict crossing label") {
  ScenarioParams p = tiny_params();
  p.num_vehicles_min = 0;
  p.num_vehicles_max = 0;
  for (int64_t i = 0; i < 20; ++i) CHECK(generate_scenario(p, i).crossing);
}

TEST_CASE("crossing fraction tracks p_cross over 1000 scenarios") {
  ScenarioParams p;  // defaults, 48x48
  int crossing = 0;
  const int n = 1000;
  for (int64_t i = 0; i < n; ++i)
    if (generate_scenario(p, i).crossing) ++crossing;
  const double frac = static_cast<double>(crossing) / n;
  CHECK(frac > p.p_cross - 0.05);
  CHECK(frac < p.p_cross + 0.05);
}

TEST_CASE("stored label is re-derivable from the kinematic record") {
  ScenarioParams p;  // defaults
  for (int64_t i = 0; i < 200; ++i) {
    GeneratedScenario g = generate_scenario_full(p, i);
    CHECK(derive_label(g.sequence.trajectory, g.kinematics,
                       g.sequence.event_frame, p) == g.sequence.crossing);
  }
}

TEST_CASE("scenario renders binary masks with the road band on channel 2") {
  ScenarioParams p = tiny_params();
  PedestrianSequence seq = generate_scenario(p, 3);
  const Tensor& f = seq.frames;
  for (int64_t i = 0; i < f.size(); ++i) {
    const double v = f.at(i);
    CHECK((v == 0.0 || v == 1.0));
  }
  // road mask is static across frames
  const int64_t chan = p.scene_h * p.scene_w;
  for (int64_t t = 1; t < seq.length(); ++t)
    for (int64_t i = 0; i < chan; ++i)
      CHECK(f.at(t * 3 * chan + 2 * chan + i) == f.at(2 * chan + i));
}

TEST_CASE("split_dataset partitions deterministically") {
  ScenarioParams p = tiny_params();
  std::vector<PedestrianSequence> seqs;
  for (int64_t i = 0; i < 10; ++i) seqs.push_back(generate_scenario(p, i));

  SplitIds s = split_dataset(seqs, 0.6, 0.2, 0.2, 5);
  CHECK(s.train.size() == 6);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 2);

  std::set<std::string> all;
  for (const auto& v : {s.train, s.val, s.test})
    for (const auto& id : v) CHECK(all.insert(id).second);  // pairwise disjoint
  CHECK(all.size() == seqs.size());

  SplitIds again = split_dataset(seqs, 0.6, 0.2, 0.2, 5);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);
  SplitIds other = split_dataset(seqs, 0.6, 0.2, 0.2, 6);
  CHECK(other.train != s.train);

  std::vector<PedestrianSequence> two(seqs.begin(), seqs.begin() + 2);
  CHECK_THROWS_AS(split_dataset(two, 0.6, 0.2, 0.2, 1), ValidationError);
  CHECK_THROWS_AS(split_dataset(seqs, 0.5, 0.2, 0.2, 1), ValidationError);
}

TEST_CASE("dataset write/read roundtrip is bit-exact") {
  TempDir tmp;
  ScenarioParams p = tiny_params();
  std::vector<PedestrianSequence> seqs;
  for (int64_t i = 0; i < 4; ++i) seqs.push_back(generate_scenario(p, i));
  write_dataset(tmp.path.string(), seqs);
  auto back = read_dataset(tmp.path.string());
  REQUIRE(back.size() == seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i) {
    CHECK(back[i].id == seqs[i].id);
    CHECK(back[i].crossing == seqs[i].crossing);
    CHECK(back[i].event_frame == seqs[i].event_frame);
    CHECK(back[i].fps == seqs[i].fps);
    CHECK(back[i].frames.bit_equal(seqs[i].frames));
    REQUIRE(back[i].trajectory.size() == seqs[i].trajectory.size());
    for (size_t t = 0; t < seqs[i].trajectory.size(); ++t) {
      CHECK(back[i].trajectory[t].u == seqs[i].trajectory[t].u);
      CHECK(back[i].trajectory[t].v == seqs[i].trajectory[t].v);
      CHECK(back[i].trajectory[t].w == seqs[i].trajectory[t].w);
      CHECK(back[i].trajectory[t].h == seqs[i].trajectory[t].h);
    }
  }
}

TEST_CASE("empty dataset roundtrips to an empty list") {
  TempDir tmp;
  write_dataset(tmp.path.string(), {});
  CHECK(read_dataset(tmp.path.string()).empty());
}

TEST_CASE("dataset read distinguishes corruption modes") {
  TempDir tmp;
  ScenarioParams p = tiny_params();
  write_dataset(tmp.path.string(), {generate_scenario(p, 0)});

  SUBCASE("truncated container") {
    const fs::path file = tmp.path / "seq000000.ntsr";
    fs::resize_file(file, fs::file_size(file) / 2);
    CHECK_THROWS_WITH_AS(read_dataset(tmp.path.string()),
                         doctest::Contains("truncated"), IoError);
  }
  SUBCASE("missing container") {
    fs::remove(tmp.path / "seq000000.ntsr");
    CHECK_THROWS_AS(read_dataset(tmp.path.string()), IoError);
  }
  SUBCASE("malformed manifest") {
    std::ofstream f(tmp.path / "manifest.json");
    f << "{not json";
    f.close();
    CHECK_THROWS_WITH_AS(read_dataset(tmp.path.string()),
                         doctest::Contains("malformed"), IoError);
  }
  SUBCASE("manifest entry missing a key") {
    std::ofstream f(tmp.path / "manifest.json");
    f << R"([{"id":"x","T":40,"crossing":true,"event_frame":30,"fps":30}])";
    f.close();
    CHECK_THROWS_WITH_AS(read_dataset(tmp.path.string()),
                         doctest::Contains("missing key"), IoError);
  }
  SUBCASE("missing manifest") {
    fs::remove(tmp.path / "manifest.json");
    CHECK_THROWS_AS(read_dataset(tmp.path.string()), IoError);
  }
}
