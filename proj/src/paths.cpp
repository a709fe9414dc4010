#include "stochrom/paths.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace stochrom {

TimeGrid::TimeGrid(double t0_, double dt_, std::size_t n_steps_)
    : t0(t0_), dt(dt_), n_steps(n_steps_) {
  validate();
}

void TimeGrid::validate() const {
  require(std::isfinite(t0), "time grid: t0 must be finite");
  require(std::isfinite(dt) && dt > 0.0, "time grid: dt must be positive and finite");
  require(n_steps >= 1, "time grid: n_steps must be at least 1");
}

namespace {
std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }
}  // namespace

NormalStream::NormalStream(const RngSpec& rng, std::uint64_t column) {
  std::seed_seq seq{lo(rng.seed), hi(rng.seed), lo(rng.stream_id),
                    hi(rng.stream_id), lo(column), hi(column)};
  engine_.seed(seq);
}

double NormalStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  constexpr double scale = 0x1.0p-53;
  const double u1 = static_cast<double>((engine_() >> 11) + 1) * scale;
  const double u2 = static_cast<double>((engine_() >> 11) + 1) * scale;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

WienerPath::WienerPath(TimeGrid grid, std::size_t m, RngSpec rng, Mat increments)
    : grid_(grid), m_(m), rng_(rng), increments_(std::move(increments)) {
  grid_.validate();
  require(m_ >= 1, "wiener path: m must be at least 1");
  require(increments_.rows() == static_cast<Eigen::Index>(grid_.n_steps) &&
              increments_.cols() == static_cast<Eigen::Index>(m_),
          "wiener path: increment matrix must be n_steps x m");
  require(increments_.allFinite(), "wiener path: increments must be finite");
}

Vec WienerPath::running_sum(std::size_t column) const {
  require(column < m_, "wiener path: column out of range");
  Vec w(grid_.n_steps + 1);
  w(0) = 0.0;
  for (std::size_t i = 0; i < grid_.n_steps; ++i)
    w(static_cast<Eigen::Index>(i + 1)) =
        w(static_cast<Eigen::Index>(i)) + increments_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(column));
  return w;
}

WienerPath generate_wiener(const RngSpec& rng, const TimeGrid& grid, std::size_t m) {
  grid.validate();
  require(m >= 1, "generate_wiener: m must be at least 1");
  const double scale = std::sqrt(grid.dt);
  Mat inc(static_cast<Eigen::Index>(grid.n_steps), static_cast<Eigen::Index>(m));
  for (std::size_t nu = 0; nu < m; ++nu) {
    NormalStream stream(rng, nu);
    for (std::size_t i = 0; i < grid.n_steps; ++i)
      inc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nu)) = scale * stream.next();
  }
  return WienerPath(grid, m, rng, std::move(inc));
}

WienerPath coarsen_wiener(const WienerPath& path, std::size_t factor) {
  const TimeGrid& g = path.grid();
  require(factor >= 1, "coarsen_wiener: factor must be at least 1");
  if (g.n_steps % factor != 0)
    throw PreconditionError("coarsen_wiener: factor " + std::to_string(factor) +
                            " does not divide n_steps " + std::to_string(g.n_steps));
  if (factor == 1) return path;
  const std::size_t n = g.n_steps / factor;
  const Mat& fine = path.increments();
  Mat coarse(static_cast<Eigen::Index>(n), fine.cols());
  for (Eigen::Index c = 0; c < fine.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < factor; ++j) s += fine(static_cast<Eigen::Index>(i * factor + j), c);
      coarse(static_cast<Eigen::Index>(i), c) = s;
    }
  }
  return WienerPath(TimeGrid(g.t0, g.dt * static_cast<double>(factor), n), path.m(), path.rng(),
                    std::move(coarse));
}

WienerStream::WienerStream(const RngSpec& rng, const TimeGrid& grid, std::size_t m)
    : grid_(grid), scale_(0.0) {
  grid_.validate();
  require(m >= 1, "wiener stream: m must be at least 1");
  scale_ = std::sqrt(grid_.dt);
  streams_.reserve(m);
  for (std::size_t nu = 0; nu < m; ++nu) streams_.emplace_back(rng, nu);
}

void WienerStream::next(VecOut dW) {
  require(produced_ < grid_.n_steps, "wiener stream: all steps already produced");
  require(dW.size() == static_cast<Eigen::Index>(streams_.size()), "wiener stream: output size must equal m");
  for (std::size_t nu = 0; nu < streams_.size(); ++nu)
    dW(static_cast<Eigen::Index>(nu)) = scale_ * streams_[nu].next();
  ++produced_;
}

}  // namespace stochrom
