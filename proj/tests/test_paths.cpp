#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "stochrom/paths.hpp"

using namespace stochrom;

namespace {

// Independent transcription of the documented generator for one column.
std::vector<double> normals_oracle(std::uint64_t seed, std::uint64_t stream, std::uint64_t column, std::size_t count) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(column), hi(column)};
  std::mt19937_64 eng(seq);
  std::vector<double> out;
  while (out.size() < count) {
    const double u1 = std::ldexp(static_cast<double>((eng() >> 11) + 1), -53);
    const double u2 = std::ldexp(static_cast<double>((eng() >> 11) + 1), -53);
    const double r = std::sqrt(-2.0 * std::log(u1));
    out.push_back(r * std::cos(2.0 * std::numbers::pi * u2));
    out.push_back(r * std::sin(2.0 * std::numbers::pi * u2));
  }
  out.resize(count);
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("time grid nodes and validation") {
  TimeGrid g(1.5, 0.1, 30);
  CHECK(g.node(0) == 1.5);
  CHECK(g.node(17) == 1.5 + 17.0 * 0.1);
  CHECK(g.t_end() == 1.5 + 30.0 * 0.1);
  CHECK_THROWS_AS(TimeGrid(0.0, 0.0, 1), PreconditionError);
  CHECK_THROWS_AS(TimeGrid(0.0, -1.0, 1), PreconditionError);
  CHECK_THROWS_AS(TimeGrid(0.0, 0.1, 0), PreconditionError);
  CHECK_THROWS_AS(TimeGrid(0.0, std::nan(""), 3), PreconditionError);
}

TEST_CASE("generate_wiener follows the documented generator") {
  const TimeGrid g(0.0, 0.04, 7);
  const WienerPath w = generate_wiener({123456789012345ull, 42}, g, 3);
  for (std::uint64_t c = 0; c < 3; ++c) {
    const auto z = normals_oracle(123456789012345ull, 42, c, 7);
    for (std::size_t i = 0; i < 7; ++i)
      CHECK(w.increments()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) == 0.2 * z[i]);
  }
}

TEST_CASE("generation is deterministic and streams differ") {
  const TimeGrid g(0.0, 0.01, 1);
  const WienerPath a = generate_wiener({1, 0}, g, 1);
  const WienerPath b = generate_wiener({1, 0}, g, 1);
  CHECK(a.increments()(0, 0) == b.increments()(0, 0));
  const WienerPath c = generate_wiener({1, 1}, TimeGrid(0.0, 0.01, 100), 1);
  const WienerPath d = generate_wiener({1, 0}, TimeGrid(0.0, 0.01, 100), 1);
  CHECK(c.increments() != d.increments());
  CHECK_THROWS_AS(generate_wiener({1, 0}, g, 0), PreconditionError);
}

TEST_CASE("moments of 10^6 increments") {
  const WienerPath w = generate_wiener({2718, 0}, TimeGrid(0.0, 0.01, 1000000), 1);
  const Vec x = w.increments().col(0);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
  CHECK(std::abs(mean) <= 4e-5);
  CHECK(std::abs(var - 0.01) <= 0.01 * 0.01);
}

TEST_CASE("Kolmogorov-Smirnov smoke test") {
  const std::size_t n = 100000;
  const WienerPath w = generate_wiener({99, 5}, TimeGrid(0.0, 0.25, n), 1);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = w.increments()(static_cast<Eigen::Index>(i), 0) / 0.5;
  std::sort(z.begin(), z.end());
  double D = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double F = normal_cdf(z[i]);
    D = std::max({D, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  CHECK(D < 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("coarsen_wiener") {
  SUBCASE("factor 1 is the identity") {
    const WienerPath w = generate_wiener({3, 0}, TimeGrid(0.0, 0.1, 8), 2);
    const WienerPath c = coarsen_wiener(w, 1);
    CHECK(c.increments() == w.increments());
    CHECK(c.grid().dt == w.grid().dt);
  }
  SUBCASE("two increments sum to one") {
    Mat inc(2, 1);
    inc << 0.3, -0.1;
    const WienerPath w(TimeGrid(0.0, 0.5, 2), 1, {}, inc);
    const WienerPath c = coarsen_wiener(w, 2);
    CHECK(c.grid().n_steps == 1);
    CHECK(c.grid().dt == 1.0);
    CHECK(c.increments()(0, 0) == 0.3 + -0.1);
  }
  SUBCASE("pairwise sums by direct addition") {
    const WienerPath w = generate_wiener({4, 0}, TimeGrid(0.0, 0.1, 4), 1);
    const WienerPath c = coarsen_wiener(w, 2);
    const Mat& f = w.increments();
    CHECK(c.increments()(0, 0) == f(0, 0) + f(1, 0));
    CHECK(c.increments()(1, 0) == f(2, 0) + f(3, 0));
  }
  SUBCASE("factor must divide n_steps") {
    const WienerPath w = generate_wiener({4, 0}, TimeGrid(0.0, 0.1, 6), 1);
    CHECK_THROWS_AS(coarsen_wiener(w, 4), PreconditionError);
    CHECK_THROWS_AS(coarsen_wiener(w, 0), PreconditionError);
  }
}

TEST_CASE("telescoping sum survives coarsening") {
  const WienerPath w = generate_wiener({8, 1}, TimeGrid(0.0, 0.001, 4096), 3);
  for (std::size_t f : {2u, 8u, 64u}) {
    const WienerPath c = coarsen_wiener(w, f);
    for (std::size_t col = 0; col < 3; ++col) {
      const double a = w.running_sum(col)(4096);
      const double b = c.running_sum(col)(static_cast<Eigen::Index>(4096 / f));
      const double scale = w.increments().col(static_cast<Eigen::Index>(col)).cwiseAbs().sum();
      CHECK(std::abs(a - b) <= 1e-15 * scale * 64);
    }
  }
}

TEST_CASE("running sum starts at zero and accumulates left to right") {
  const WienerPath w = generate_wiener({5, 0}, TimeGrid(0.0, 0.1, 5), 1);
  const Vec W = w.running_sum(0);
  CHECK(W.size() == 6);
  CHECK(W(0) == 0.0);
  double s = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    s += w.increments()(i, 0);
    CHECK(W(i + 1) == s);
  }
  CHECK_THROWS_AS(w.running_sum(1), PreconditionError);
}

TEST_CASE("streamed increments equal stored increments") {
  const RngSpec rng{77, 3};
  const TimeGrid g(0.0, 0.02, 25);
  const WienerPath w = generate_wiener(rng, g, 4);
  WienerStream s(rng, g, 4);
  Vec dW(4);
  for (std::size_t i = 0; i < 25; ++i) {
    s.next(dW);
    CHECK(dW == w.step_increment(i));
  }
  CHECK_THROWS_AS(s.next(dW), PreconditionError);
}

TEST_CASE("path constructor rejects malformed increments") {
  Mat bad(2, 1);
  bad << 0.1, std::nan("");
  CHECK_THROWS_AS(WienerPath(TimeGrid(0.0, 0.1, 2), 1, {}, bad), PreconditionError);
  CHECK_THROWS_AS(WienerPath(TimeGrid(0.0, 0.1, 3), 1, {}, Mat::Zero(2, 1)), PreconditionError);
}
