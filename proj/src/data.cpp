#include "relnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "relnet/ntsr.hpp"
#include "relnet/rng.hpp"

namespace relnet {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> ScenarioParams::validate() const {
  std::vector<std::string> bad;
  if (scene_w < 8 || scene_h < 8)
    bad.push_back("scenario.scene_w/scene_h must be >= 8");
  if (track_len < 4) bad.push_back("scenario.track_len must be >= 4");
  if (num_vehicles_min < 0 || num_vehicles_max < num_vehicles_min)
    bad.push_back("scenario vehicle count range is degenerate");
  if (!(speed_min > 0) || !(speed_max > speed_min))
    bad.push_back("scenario speed range must satisfy 0 < speed_min < speed_max");
  if (!(v_yield > 0)) bad.push_back("scenario.v_yield must be > 0");
  if (!(d_near > 0)) bad.push_back("scenario.d_near must be > 0");
  if (!(p_cross > 0.0 && p_cross < 1.0))
    bad.push_back("scenario.p_cross must lie strictly between 0 and 1");
  return bad;
}

void ScenarioParams::validate_or_throw() const {
  auto bad = validate();
  if (bad.empty()) return;
  std::string msg = "invalid scenario params:";
  for (const auto& b : bad) msg += "\n  - " + b;
  throw ValidationError(msg);
}

bool derive_label(const Trajectory& pedestrian, const ScenarioKinematics& kin,
                  int64_t t_d, const ScenarioParams& params) {
  const double ped_x = pedestrian[static_cast<size_t>(t_d)].u;
  double nearest_any = std::numeric_limits<double>::infinity();
  double nearest_approach = std::numeric_limits<double>::infinity();
  double nearest_approach_speed = 0.0;
  for (const auto& veh : kin.vehicles) {
    const double x_now = veh.boxes[static_cast<size_t>(t_d)].u;
    const double x_prev = veh.boxes[static_cast<size_t>(t_d - 1)].u;
    const double vel = x_now - x_prev;
    const double dist = std::abs(x_now - ped_x);
    nearest_any = std::min(nearest_any, dist);
    const bool approaching = (ped_x - x_now) * vel > 0.0;
    if (approaching && dist < nearest_approach) {
      nearest_approach = dist;
      nearest_approach_speed = std::abs(vel);
    }
  }
  if (nearest_any > params.d_near) return true;  // no conflict in reach
  return nearest_approach <= params.d_near &&
         nearest_approach_speed < params.v_yield;
}

namespace {

struct PedTrack {
  std::vector<double> x, y;
  double w, h;
};

double ped_y_at(double y0, double y_curb, int64_t t, int64_t t_d) {
  if (t >= t_d) return y_curb;
  return y0 + (y_curb - y0) * static_cast<double>(t) / static_cast<double>(t_d);
}

void fill_rect(float* channel, int64_t H, int64_t W, double cx, double cy,
               double w, double h) {
  const int64_t x0 = std::llround(cx - w / 2.0);
  const int64_t y0 = std::llround(cy - h / 2.0);
  const int64_t y1 = std::min<int64_t>(H, y0 + std::llround(h));
  const int64_t x1 = std::min<int64_t>(W, x0 + std::llround(w));
  for (int64_t y = std::max<int64_t>(0, y0); y < y1; ++y)
    for (int64_t x = std::max<int64_t>(0, x0); x < x1; ++x)
      channel[y * W + x] = 1.0f;
}

}  // namespace

GeneratedScenario generate_scenario_full(const ScenarioParams& params,
                                         int64_t index) {
  params.validate_or_throw();
  RngStream rng = Rng(params.seed).stream("scenario", static_cast<uint64_t>(index));

  const int64_t W = params.scene_w, H = params.scene_h, T = params.track_len;
  const int64_t road_y0 = std::llround(0.35 * static_cast<double>(H));
  const int64_t road_y1 = std::llround(0.65 * static_cast<double>(H));

  const int64_t back = rng.uniform_int(5, 11);
  const int64_t t_d = std::max<int64_t>(1, T - 1 - back);

  const double pw = std::max<double>(2.0, std::round(0.05 * static_cast<double>(W)));
  const double ph = std::max<double>(2.0, std::round(0.07 * static_cast<double>(H)));
  const double ped_x0 = rng.uniform(0.15 * W, 0.85 * W);
  const double ped_drift = rng.uniform(-0.03, 0.03);
  const double y_curb = static_cast<double>(road_y1) + 1.0 + ph / 2.0;
  const double ped_y0 =
      rng.uniform(std::min(0.78 * H, static_cast<double>(H) - ph), 0.92 * H);

  PedTrack ped;
  ped.w = pw;
  ped.h = ph;
  ped.x.resize(static_cast<size_t>(T));
  ped.y.resize(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    ped.x[static_cast<size_t>(t)] = ped_x0 + ped_drift * static_cast<double>(t);
    ped.y[static_cast<size_t>(t)] = ped_y_at(ped_y0, y_curb, t, t_d);
  }

  const bool want_cross = rng.bernoulli(params.p_cross);
  enum class Mode { no_conflict, yield, conflict };
  Mode mode = want_cross ? (rng.bernoulli(0.5) ? Mode::no_conflict : Mode::yield)
                         : Mode::conflict;

  int64_t n_veh = rng.uniform_int(params.num_vehicles_min, params.num_vehicles_max);
  if (mode == Mode::conflict && n_veh == 0 && params.num_vehicles_max > 0) n_veh = 1;
  if (n_veh == 0) mode = Mode::no_conflict;  // nothing to conflict with

  const double ped_x_td = ped.x[static_cast<size_t>(t_d)];
  const double vw = std::max<double>(3.0, std::round(0.12 * static_cast<double>(W)));
  const double vh = std::max<double>(2.0, std::round(0.06 * static_cast<double>(H)));

  ScenarioKinematics kin;
  for (int64_t vi = 0; vi < n_veh; ++vi) {
    const double lane_y = rng.uniform(road_y0 + vh / 2.0 + 0.5, road_y1 - vh / 2.0 - 0.5);
    const double dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double s1 = rng.uniform(params.speed_min, params.speed_max);
    // the speed change lands early so observation windows see the final regime
    const int64_t tc =
        std::min<int64_t>(rng.uniform_int(5, 15), std::max<int64_t>(1, t_d - 2));
    double s2 = rng.uniform(params.speed_min, params.speed_max);
    double x_td;
    const bool primary = vi == 0 && mode != Mode::no_conflict;
    if (primary && mode == Mode::yield) {
      const double dx = rng.uniform(0.2 * params.d_near, 0.8 * params.d_near);
      s2 = rng.uniform(0.3 * params.v_yield, 0.85 * params.v_yield);
      x_td = ped_x_td - dir * dx;
    } else if (primary && mode == Mode::conflict) {
      const double dx = rng.uniform(0.2 * params.d_near, 0.8 * params.d_near);
      const double lo = std::max(1.15 * params.v_yield, params.speed_min);
      s2 = rng.uniform(lo, std::max(lo + 1e-6, params.speed_max));
      x_td = ped_x_td - dir * dx;
    } else {
      const double dx_far =
          rng.uniform(1.4 * params.d_near, 1.4 * params.d_near + 0.5 * W);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      x_td = ped_x_td + side * dx_far;
    }

    // integrate piecewise-constant speed around the anchor at t_d
    std::vector<double> xs(static_cast<size_t>(T));
    xs[static_cast<size_t>(t_d)] = x_td;
    const auto vel_at = [&](int64_t t) { return dir * (t < tc ? s1 : s2); };
    for (int64_t t = t_d; t > 0; --t)
      xs[static_cast<size_t>(t - 1)] = xs[static_cast<size_t>(t)] - vel_at(t - 1);
    for (int64_t t = t_d; t + 1 < T; ++t)
      xs[static_cast<size_t>(t + 1)] = xs[static_cast<size_t>(t)] + vel_at(t);

    VehicleTrack track;
    track.boxes.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t)
      track.boxes.push_back({static_cast<float>(xs[static_cast<size_t>(t)]),
                             static_cast<float>(lane_y), static_cast<float>(vw),
                             static_cast<float>(vh)});
    kin.vehicles.push_back(std::move(track));
  }

  PedestrianSequence seq;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq%06lld", static_cast<long long>(index));
  seq.id = buf;
  seq.event_frame = t_d;
  seq.fps = 30;
  seq.trajectory.reserve(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t)
    seq.trajectory.push_back({static_cast<float>(ped.x[static_cast<size_t>(t)]),
                              static_cast<float>(ped.y[static_cast<size_t>(t)]),
                              static_cast<float>(pw), static_cast<float>(ph)});
  seq.crossing = derive_label(seq.trajectory, kin, t_d, params);

  seq.frames = Tensor::zeros({T, 3, H, W}, DType::f32);
  float* fp = seq.frames.data<float>();
  const int64_t chan = H * W;
  for (int64_t t = 0; t < T; ++t) {
    float* base = fp + t * 3 * chan;
    for (int64_t y = road_y0; y < road_y1; ++y)
      for (int64_t x = 0; x < W; ++x) base[2 * chan + y * W + x] = 1.0f;
    const Box& pb = seq.trajectory[static_cast<size_t>(t)];
    fill_rect(base, H, W, pb.u, pb.v, pb.w, pb.h);
    for (const auto& veh : kin.vehicles) {
      const Box& vb = veh.boxes[static_cast<size_t>(t)];
      fill_rect(base + chan, H, W, vb.u, vb.v, vb.w, vb.h);
    }
  }

  return {std::move(seq), std::move(kin)};
}

PedestrianSequence generate_scenario(const ScenarioParams& params, int64_t index) {
  return generate_scenario_full(params, index).sequence;
}

std::vector<ObservationSample> subsample_tte(const PedestrianSequence& seq,
                                             int64_t tau, double overlap,
                                             int64_t tte_min, int64_t tte_max) {
  if (tau < 1) throw ValidationError("subsample_tte: tau must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw ValidationError("subsample_tte: overlap must lie in [0,1)");
  if (tte_min < 0 || tte_max < tte_min)
    throw ValidationError("subsample_tte: need 0 <= tte_min <= tte_max");

  const int64_t T = seq.length();
  const int64_t event = seq.event_frame;
  const int64_t stride =
      std::max<int64_t>(1, std::llround(static_cast<double>(tau) * (1.0 - overlap)));
  const int64_t first = std::max<int64_t>(tau - 1, event - tte_max);
  const int64_t last = std::min<int64_t>(event - tte_min, T - 1);

  std::vector<ObservationSample> out;
  if (first > last) return out;

  const int64_t C = seq.frames.dim(1), H = seq.frames.dim(2), W = seq.frames.dim(3);
  const float* fp = seq.frames.data<float>();
  const int64_t frame_sz = C * H * W;

  for (int64_t t_last = first; t_last <= last; t_last += stride) {
    ObservationSample s;
    s.frames = Tensor::zeros({tau, C, H, W}, DType::f32);
    std::copy_n(fp + (t_last - tau + 1) * frame_sz, tau * frame_sz,
                s.frames.data<float>());
    s.boxes_norm = Tensor::zeros({tau, 4}, DType::f32);
    float* bp = s.boxes_norm.data<float>();
    for (int64_t i = 0; i < tau; ++i) {
      const Box& b = seq.trajectory[static_cast<size_t>(t_last - tau + 1 + i)];
      const float vals[4] = {b.u / static_cast<float>(W), b.v / static_cast<float>(H),
                             b.w / static_cast<float>(W), b.h / static_cast<float>(H)};
      for (int64_t j = 0; j < 4; ++j)
        bp[i * 4 + j] = std::clamp(vals[j], 0.0f, 1.0f);
    }
    s.label = seq.crossing ? 1 : 0;
    s.tte = event - t_last;
    s.source_id = seq.id;
    s.t_last = t_last;
    out.push_back(std::move(s));
  }
  return out;
}

SplitIds split_dataset(const std::vector<PedestrianSequence>& sequences,
                       double train_ratio, double val_ratio, double test_ratio,
                       uint64_t seed) {
  if (!(train_ratio > 0 && val_ratio > 0 && test_ratio > 0))
    throw ValidationError("split_dataset: ratios must be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw ValidationError("split_dataset: ratios must sum to 1");
  const int64_t n = static_cast<int64_t>(sequences.size());
  if (n < 3)
    throw ValidationError("split_dataset: need at least 3 sequences, got " +
                          std::to_string(n));

  std::vector<std::string> ids;
  ids.reserve(sequences.size());
  for (const auto& s : sequences) ids.push_back(s.id);
  RngStream rng = Rng(seed).stream("split");
  rng.shuffle(ids);

  int64_t n_train = std::llround(train_ratio * static_cast<double>(n));
  int64_t n_val = std::llround(val_ratio * static_cast<double>(n));
  n_train = std::clamp<int64_t>(n_train, 1, n - 2);
  n_val = std::clamp<int64_t>(n_val, 1, n - n_train - 1);

  SplitIds out;
  out.train.assign(ids.begin(), ids.begin() + n_train);
  out.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  out.test.assign(ids.begin() + n_train + n_val, ids.end());
  return out;
}

void write_dataset(const std::string& dir_path,
                   const std::vector<PedestrianSequence>& sequences) {
  fs::create_directories(dir_path);
  json manifest = json::array();
  for (const auto& seq : sequences) {
    const std::string file = seq.id + ".ntsr";
    Tensor boxes = Tensor::zeros({seq.length(), 4}, DType::f32);
    float* bp = boxes.data<float>();
    for (int64_t i = 0; i < seq.length(); ++i) {
      const Box& b = seq.trajectory[static_cast<size_t>(i)];
      bp[i * 4 + 0] = b.u;
      bp[i * 4 + 1] = b.v;
      bp[i * 4 + 2] = b.w;
      bp[i * 4 + 3] = b.h;
    }
    ntsr_write((fs::path(dir_path) / file).string(),
               {{"frames", seq.frames}, {"boxes", boxes}});
    manifest.push_back({{"id", seq.id},
                        {"T", seq.length()},
                        {"crossing", seq.crossing},
                        {"event_frame", seq.event_frame},
                        {"fps", seq.fps},
                        {"file", file}});
  }
  // manifest goes last so a complete manifest implies complete containers
  std::ofstream f(fs::path(dir_path) / "manifest.json");
  if (!f) throw IoError("cannot write manifest in " + dir_path);
  f << manifest.dump(2) << "\n";
}

std::vector<PedestrianSequence> read_dataset(const std::string& dir_path) {
  const fs::path mpath = fs::path(dir_path) / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw IoError("missing manifest.json in " + dir_path);
  json manifest;
  try {
    manifest = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest.json in " + dir_path + ": " + e.what());
  }
  if (!manifest.is_array())
    throw IoError("malformed manifest.json in " + dir_path + ": expected an array");

  std::vector<PedestrianSequence> out;
  for (const auto& entry : manifest) {
    for (const char* key : {"id", "T", "crossing", "event_frame", "fps", "file"})
      if (!entry.contains(key))
        throw IoError("manifest entry missing key '" + std::string(key) + "' in " +
                      dir_path);
    PedestrianSequence seq;
    seq.id = entry["id"].get<std::string>();
    seq.crossing = entry["crossing"].get<bool>();
    seq.event_frame = entry["event_frame"].get<int64_t>();
    seq.fps = entry["fps"].get<int64_t>();
    const int64_t T = entry["T"].get<int64_t>();

    auto entries = ntsr_read((fs::path(dir_path) / entry["file"].get<std::string>()).string());
    const Tensor* frames = nullptr;
    const Tensor* boxes = nullptr;
    for (const auto& [name, t] : entries) {
      if (name == "frames") frames = &t;
      if (name == "boxes") boxes = &t;
    }
    if (!frames || !boxes)
      throw IoError("container for " + seq.id + " lacks frames/boxes entries");
    if (frames->rank() != 4 || frames->dim(0) != T || boxes->rank() != 2 ||
        boxes->dim(0) != T || boxes->dim(1) != 4)
      throw IoError("container shapes for " + seq.id + " disagree with manifest T=" +
                    std::to_string(T));
    seq.frames = *frames;
    const float* bp = boxes->data<float>();
    seq.trajectory.reserve(static_cast<size_t>(T));
    for (int64_t i = 0; i < T; ++i)
      seq.trajectory.push_back(
          {bp[i * 4 + 0], bp[i * 4 + 1], bp[i * 4 + 2], bp[i * 4 + 3]});
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace relnet
