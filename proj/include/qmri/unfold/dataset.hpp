#pragma once

#include <cstdint>
#include <vector>

#include "qmri/core/config.hpp"
#include "qmri/forward/operator.hpp"
#include "qmri/motion/motion.hpp"
#include "qmri/phantom/phantom.hpp"

namespace qmri::unfold {

// How toy training/evaluation slices are simulated.
struct SimConfig {
  phantom::PhantomSpec phantom;     // grid, echoes, coils, tissue ranges
  std::vector<long long> accels{2, 4, 8};  // one entry pins the rate
  std::size_t central_cap = 24;
  double snr_db = 40.0;
  bool motion = true;
  motion::MotionConfig motion_cfg;

  void validate() const;
  void read(const Config& c);
  void write(ConfigWriter& w) const;
};

struct Sample {
  MGREImage x;                  // ground truth
  QMaps maps;                   // ground-truth maps, F(t), REM
  forward::MeasurementOperator op;
  forward::KSpaceSet y;         // motion-corrupted, noisy
  motion::MotionSchedule schedule;
  int accel = 1;
};

// Slice j is simulated from RngStream(seed, stream).fork(j), so the set is
// independent of the worker count.
std::vector<Sample> make_dataset(const SimConfig& cfg, std::size_t count, std::uint64_t seed, std::uint64_t stream,
                                 std::size_t workers = 1);
Sample make_sample(const SimConfig& cfg, RngStream rng);

}  // namespace qmri::unfold
