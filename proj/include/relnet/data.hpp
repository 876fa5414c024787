#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relnet/tensor.hpp"

namespace relnet {

// Pedestrian bounding box: center, width, height in pixels. Stored as f32 so
// container roundtrips are bit-exact.
struct Box {
  float u, v, w, h;
};

using Trajectory = std::vector<Box>;

struct PedestrianSequence {
  std::string id;
  Tensor frames;  // [T,3,H,W] f32 masks: ch0 pedestrian, ch1 vehicles, ch2 road
  Trajectory trajectory;
  bool crossing = false;
  int64_t event_frame = 0;  // decision point t_d
  int64_t fps = 30;

  int64_t length() const { return static_cast<int64_t>(trajectory.size()); }
};

struct ObservationSample {
  Tensor frames;      // [tau,3,H,W]
  Tensor boxes_norm;  // [tau,4], u,w / scene W and v,h / scene H, clamped to [0,1]
  int label = 0;
  int64_t tte = 0;  // event_frame - t_last
  std::string source_id;
  int64_t t_last = 0;
};

struct ScenarioParams {
  int64_t scene_w = 48;
  int64_t scene_h = 48;
  int64_t track_len = 100;
  int64_t num_vehicles_min = 1;
  int64_t num_vehicles_max = 3;
  double speed_min = 0.2;  // px/frame
  double speed_max = 1.5;
  double v_yield = 0.5;   // below this a nearby vehicle is yielding
  double d_near = 12.0;   // longitudinal |dx| interaction distance
  double p_cross = 0.5;
  uint64_t seed = 1234;

  std::vector<std::string> validate() const;
  void validate_or_throw() const;
};

// Internal kinematic record kept alongside the rendered sequence; the label
// rule below is a pure function of these boxes.
struct VehicleTrack {
  std::vector<Box> boxes;  // one per frame, center may be off-scene
};

struct ScenarioKinematics {
  std::vector<VehicleTrack> vehicles;
};

// crossing=true iff at t_d the nearest approaching vehicle is within d_near
// and slower than v_yield, or no vehicle is within d_near at all.
// Approaching means moving toward the pedestrian's x; distance is |dx| of
// centers; vehicle speed at t_d is x(t_d) - x(t_d - 1).
bool derive_label(const Trajectory& pedestrian,
                  const ScenarioKinematics& kinematics, int64_t t_d,
                  const ScenarioParams& params);

struct GeneratedScenario {
  PedestrianSequence sequence;
  ScenarioKinematics kinematics;
};

// Deterministic in (params.seed, index).
GeneratedScenario generate_scenario_full(const ScenarioParams& params, int64_t index);
PedestrianSequence generate_scenario(const ScenarioParams& params, int64_t index);

// Time-to-event subsampling. Eligible last frames satisfy
// tte_min <= event_frame - t_last <= tte_max and t_last >= tau-1; emission
// starts at the smallest eligible index and advances by
// stride = max(1, round(tau*(1-overlap))), rounding half away from zero.
std::vector<ObservationSample> subsample_tte(const PedestrianSequence& seq,
                                             int64_t tau, double overlap,
                                             int64_t tte_min, int64_t tte_max);

struct SplitIds {
  std::vector<std::string> train, val, test;
};

// Deterministic shuffle by seed, then contiguous cuts; splitting is by whole
// sequence so windows from one track never cross splits.
SplitIds split_dataset(const std::vector<PedestrianSequence>& sequences,
                       double train_ratio, double val_ratio, double test_ratio,
                       uint64_t seed);

// manifest.json {id, T, crossing, event_frame, fps, file} + one NTSR container
// per sequence holding "frames" and "boxes".
void write_dataset(const std::string& dir_path,
                   const std::vector<PedestrianSequence>& sequences);
std::vector<PedestrianSequence> read_dataset(const std::string& dir_path);

}  // namespace relnet
