#pragma once

// Seeded, reproducible Wiener increments.
//
// Generator: each increment column nu is an independent std::mt19937_64
// stream (19937-bit state, algorithm fixed by the C++ standard) seeded through
// std::seed_seq with the six 32-bit words
//   {seed_lo, seed_hi, stream_lo, stream_hi, column_lo, column_hi}.
// Normal variates use the Box-Muller transform on consecutive pairs of
// uniforms u = ((x >> 11) + 1) * 2^-53 in (0, 1]; both outputs of a pair are
// used (cosine first). Increments are sqrt(dt) * z, never truncated.
//
// These rules are frozen: acceptance runs pin seeds against them.

#include <cstdint>
#include <random>
#include <vector>

#include "stochrom/types.hpp"

namespace stochrom {

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t n_steps = 0;

  TimeGrid() = default;
  TimeGrid(double t0_, double dt_, std::size_t n_steps_);

  double node(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  double t_end() const { return node(n_steps); }
  void validate() const;
};

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// Standard normal source for one (seed, stream_id, column) stream.
class NormalStream {
 public:
  NormalStream(const RngSpec& rng, std::uint64_t column);
  double next();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

class WienerPath {
 public:
  WienerPath(TimeGrid grid, std::size_t m, RngSpec rng, Mat increments);

  const TimeGrid& grid() const { return grid_; }
  std::size_t m() const { return m_; }
  const RngSpec& rng() const { return rng_; }
  // n_steps x m, entry (i, nu) is the increment of W^nu over step i.
  const Mat& increments() const { return increments_; }
  Vec step_increment(std::size_t i) const { return increments_.row(static_cast<Eigen::Index>(i)).transpose(); }
  // W^nu at every node (n_steps + 1 values), left-to-right running sum.
  Vec running_sum(std::size_t column) const;

 private:
  TimeGrid grid_;
  std::size_t m_;
  RngSpec rng_;
  Mat increments_;
};

WienerPath generate_wiener(const RngSpec& rng, const TimeGrid& grid, std::size_t m);

// Sums each block of `factor` consecutive increments.
WienerPath coarsen_wiener(const WienerPath& path, std::size_t factor);

// Row-by-row producer of the same increments generate_wiener would store,
// for runs whose increment matrix does not fit in memory.
class WienerStream {
 public:
  WienerStream(const RngSpec& rng, const TimeGrid& grid, std::size_t m);

  std::size_t m() const { return streams_.size(); }
  const TimeGrid& grid() const { return grid_; }
  // Writes the increments of the next step; throws once n_steps rows were produced.
  void next(VecOut dW);

 private:
  TimeGrid grid_;
  double scale_;
  std::size_t produced_ = 0;
  std::vector<NormalStream> streams_;
};

}  // namespace stochrom
