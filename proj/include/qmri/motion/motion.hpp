#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qmri/core/rng.hpp"
#include "qmri/core/types.hpp"
#include "qmri/forward/operator.hpp"

namespace qmri::motion {

// In-plane rigid motion: rotation (degrees, about the grid center) followed
// by a translation (voxels; dx along columns, dy along rows).
struct RigidMotion {
  double dx = 0.0;
  double dy = 0.0;
  double angle = 0.0;

  bool is_identity() const { return dx == 0.0 && dy == 0.0 && angle == 0.0; }
  // Schedule events are limited to |angle| <= 30; apply_rigid accepts any
  // angle in [-180, 180].
  void validate(std::size_t h, std::size_t w, double max_angle = 30.0) const;
};

// One motion event replaces the contiguous ky block [start, start+length).
struct MotionEvent {
  RigidMotion transform;
  std::size_t start = 0;
  std::size_t length = 0;
  double duration = 0.0;  // sampled fraction of lines, before rounding
};

struct MotionSchedule {
  std::vector<MotionEvent> events;

  bool empty() const { return events.empty(); }
  // Throws if a block leaves [0, h), two blocks overlap, or a transform
  // violates the RigidMotion bounds on an h×w grid.
  void validate(std::size_t h, std::size_t w) const;
};

struct MotionConfig {
  std::size_t l_max = 3;    // events per slice ~ Uniform{1..l_max}
  double d_min = 0.05;      // block length, fraction of ky lines
  double d_max = 0.20;
  double a_max = 5.0;       // translation amplitude, voxels
  double r_max = 5.0;       // rotation amplitude, degrees
};

MGREImage apply_rigid(const MGREImage& x, const RigidMotion& m);
ComplexGrid apply_rigid(const ComplexGrid& x, const RigidMotion& m);

MotionSchedule sample_schedule(const MotionConfig& cfg, std::size_t h, RngStream& rng);

// y = (I - ΣH_l)·A x + Σ H_l·A φ_l(x) + e, with whole ky lines swapped across
// all coils and echoes, then noise as in forward::add_noise.
forward::KSpaceSet corrupt(const forward::MeasurementOperator& op, const MGREImage& x,
                           const MotionSchedule& sched, double snr_db, RngStream& rng);

// Text manifest, one event per line: start len dx dy angle.
std::string format_schedule(const MotionSchedule& s);
MotionSchedule parse_schedule(const std::string& text);
void write_schedule(const std::filesystem::path& path, const MotionSchedule& s);
MotionSchedule read_schedule(const std::filesystem::path& path);

}  // namespace qmri::motion
