#pragma once

#include <cstdint>
#include <random>

namespace qmri {

// Seeded random stream. Equal (seed, stream_id) pairs produce equal draw
// sequences; a stream is confined to a single worker.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);  // [lo, hi]
  double normal();

  // Independent child stream, e.g. one per slice or per worker.
  RngStream fork(std::uint64_t child_id) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace qmri
