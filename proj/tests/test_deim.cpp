#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <memory>
#include <random>

#include "stochrom/benchmarks.hpp"
#include "stochrom/deim.hpp"
#include "test_systems.hpp"

using namespace stochrom;
using testsys::max_abs;

namespace {

// Greedy selection written with explicit inverses of the small systems.
std::vector<std::size_t> deim_oracle(const Mat& Psi) {
  std::vector<std::size_t> p;
  Eigen::Index best = 0;
  Psi.col(0).cwiseAbs().maxCoeff(&best);
  p.push_back(static_cast<std::size_t>(best));
  for (Eigen::Index l = 1; l < Psi.cols(); ++l) {
    Mat Pt = Mat::Zero(l, Psi.rows());
    for (Eigen::Index i = 0; i < l; ++i) Pt(i, static_cast<Eigen::Index>(p[static_cast<std::size_t>(i)])) = 1.0;
    const Mat U = Psi.leftCols(l);
    const Vec r = Psi.col(l) - U * (Pt * U).inverse() * (Pt * Psi.col(l));
    r.cwiseAbs().maxCoeff(&best);
    p.push_back(static_cast<std::size_t>(best));
  }
  return p;
}

struct NlsData {
  NLSConfig cfg;
  HamiltonianSDESystem sys;
  Trajectory traj;
  Mat states;     // dim x r
  Mat nonlinear;  // dim x r
};

const NlsData& nls_data() {
  static const NlsData d = [] {
    NlsData out;
    out.cfg.N = 16;
    out.cfg.x_max = 20.0;
    out.cfg.x_c = 10.0;
    out.cfg.beta = 0.1;
    out.sys = build_nls_system(out.cfg);
    const auto res = integrate(to_sde(out.sys), Method::midpoint, soliton_initial_condition(out.cfg),
                               generate_wiener({11, 0}, TimeGrid(0.0, 0.01, 400), 1));
    REQUIRE(res.ok());
    out.traj = res.trajectory;
    out.states = sample_states(out.traj, 2);
    out.nonlinear = map_columns(out.states, out.sys.H_split->nonlinear, out.sys.dim());
    return out;
  }();
  return d;
}

}  // namespace

TEST_CASE("deim_select_indices examples") {
  CHECK(deim_select_indices(Mat::Identity(4, 4).col(2)) == std::vector<std::size_t>{2});
  CHECK(deim_select_indices(Mat::Identity(3, 3).leftCols(2)) == std::vector<std::size_t>{0, 1});
  Mat tie(3, 1);
  tie << 0.5, -0.5, 0.2;
  CHECK(deim_select_indices(tie) == std::vector<std::size_t>{0});
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Mat Psi = testsys::random_mat(6, 1 + t % 6, rng);
    CHECK(deim_select_indices(Psi) == deim_oracle(Psi));
  }
  const Mat big = testsys::random_orthonormal(40, 12, rng);
  CHECK(deim_select_indices(big) == deim_oracle(big));
}

TEST_CASE("deim_select_indices errors") {
  Mat dep(3, 2);
  dep << 1.0, 2.0, 0.5, 1.0, 0.0, 0.0;
  try {
    deim_select_indices(dep);
    FAIL("expected a failure");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("column 1") != std::string::npos);
  }
  CHECK_THROWS_AS(deim_select_indices(Mat::Zero(3, 1)), NumericalError);
  CHECK_THROWS_AS(deim_select_indices(Mat::Ones(2, 3)), PreconditionError);
}

TEST_CASE("interpolation identities") {
  std::mt19937_64 rng(9);
  const Eigen::Index n = 10;
  LinearSplit split;
  split.L = SpMat(n, n);
  split.nonlinear = [](const VecIn& u, VecOut o) { o = u.array().cube(); };
  split.nonlinear_component = [](const VecIn& u, std::size_t i) { return std::pow(u(static_cast<Eigen::Index>(i)), 3); };
  const Mat Psi = testsys::random_orthonormal(n, 4, rng);
  const DeimOperator op = deim_from_basis(Psi, Vec(), Mat::Identity(n, n), split);
  SUBCASE("interpolation is exact on the span of Psi") {
    for (int i = 0; i < 5; ++i) {
      const Vec v = Psi * testsys::random_vec(4, rng);
      CHECK((op.approximate(v) - v).norm() <= 1e-12 * v.norm());
    }
  }
  SUBCASE("approximation matches the selected entries") {
    const Vec v = testsys::random_vec(n, rng);
    const Vec a = op.approximate(v);
    for (std::size_t i : op.indices) CHECK(a(static_cast<Eigen::Index>(i)) == doctest::Approx(v(static_cast<Eigen::Index>(i))).epsilon(1e-12));
  }
  SUBCASE("one-dimensional span") {
    const Mat col = Psi.col(0);
    const DeimOperator one = deim_from_basis(col, Vec(), Mat::Identity(n, n), split);
    const Vec v = 3.7 * col;
    CHECK((one.approximate(v) - v).norm() <= 1e-13);
    CHECK(one.C >= 1.0);
  }
  SUBCASE("C and the error bound") {
    CHECK(op.C >= 1.0);
    CHECK(op.condition >= 1.0);
    for (int i = 0; i < 20; ++i) {
      const Vec v = testsys::random_vec(n, rng);
      const double err = (v - op.approximate(v)).norm();
      const double proj = (v - Psi * (Psi.transpose() * v)).norm();
      CHECK(err <= op.C * proj * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("DEIM on NLS nonlinear snapshots") {
  const NlsData& d = nls_data();
  SnapshotMatrix snaps{d.nonlinear, SnapshotLayout::generic, 0};
  const Mat I = Mat::Identity(32, 32);
  double prev_resid = INFINITY;
  for (std::size_t kbar : {2u, 4u, 8u, 16u}) {
    const DeimOperator op = build_deim(snaps, kbar, I, *d.sys.H_split);
    double worst = 0.0, worst_resid = 0.0;
    for (Eigen::Index j = 0; j < d.nonlinear.cols(); ++j) {
      const Vec a = d.nonlinear.col(j);
      const double resid = (a - op.Psi * (op.Psi.transpose() * a)).norm();
      worst = std::max(worst, (a - op.approximate(a)).norm() - op.C * resid);
      worst_resid = std::max(worst_resid, resid);
    }
    CHECK(worst <= 1e-10);
    CHECK(worst_resid <= prev_resid * (1.0 + 1e-12));
    prev_resid = worst_resid;
  }
  SUBCASE("deim_from_basis reproduces build_deim") {
    const DeimOperator a = build_deim(snaps, 6, I, *d.sys.H_split);
    const DeimOperator b = deim_from_basis(a.Psi, a.sigma_record, I, *d.sys.H_split);
    CHECK(a.indices == b.indices);
    CHECK(a.W == b.W);
    CHECK(a.interp == b.interp);
  }
}

TEST_CASE("POD-DEIM reduced SDE") {
  const NlsData& d = nls_data();
  const SDESystem sde = to_sde(d.sys);
  const PODBasis basis = build_pod(SnapshotMatrix{d.states, SnapshotLayout::generic, 0}, 6);
  const SDESystem pod = reduce_sde_pod(sde, basis);
  const Mat drift_snaps = map_columns(d.states, sde.drift_split->nonlinear, 32);
  std::mt19937_64 rng(13);

  SUBCASE("full interpolation space gives the projected drift") {
    const DeimOperator op = deim_from_basis(Mat::Identity(32, 32), Vec(), basis.U, *sde.drift_split);
    const SDESystem red = reduce_sde_pod_deim(sde, basis, op);
    for (int i = 0; i < 5; ++i) {
      const Vec xi = testsys::random_vec(6, rng, 0.3);
      CHECK((red.drift_at(xi) - pod.drift_at(xi)).norm() <= 1e-12 * (1.0 + pod.drift_at(xi).norm()));
      CHECK((red.diffusion_at(xi, 0) - pod.diffusion_at(xi, 0)).norm() <= 1e-13 * (1.0 + xi.norm()));
    }
  }
  SUBCASE("zero nonlinearity leaves the linear drift") {
    LinearSplit lin = *sde.drift_split;
    lin.nonlinear = [](const VecIn&, VecOut o) { o.setZero(); };
    lin.nonlinear_component = [](const VecIn&, std::size_t) { return 0.0; };
    SDESystem s = sde;
    s.drift = [L = lin.L](const VecIn& u, VecOut o) { o = L * u; };
    s.drift_split = lin;
    const DeimOperator op = build_deim(SnapshotMatrix{drift_snaps, SnapshotLayout::generic, 0}, 4, basis.U, lin);
    const SDESystem red = reduce_sde_pod_deim(s, basis, op);
    const Mat Lr = basis.U.transpose() * (lin.L * basis.U);
    const Vec xi = testsys::random_vec(6, rng);
    CHECK((red.drift_at(xi) - Lr * xi).norm() <= 1e-13 * (1.0 + xi.norm()));
  }
  SUBCASE("one component evaluation per interpolation index") {
    auto counter = std::make_shared<std::atomic<long>>(0);
    LinearSplit counted = *sde.drift_split;
    counted.nonlinear_component = [inner = counted.nonlinear_component, counter](const VecIn& u, std::size_t i) {
      ++*counter;
      return inner(u, i);
    };
    const DeimOperator op = build_deim(SnapshotMatrix{drift_snaps, SnapshotLayout::generic, 0}, 5, basis.U, counted);
    const SDESystem red = reduce_sde_pod_deim(sde, basis, op);
    *counter = 0;
    (void)red.drift_at(testsys::random_vec(6, rng));
    CHECK(*counter == 5);
    CHECK(op.lift_rows.size() <= 5u * 6u);
    CHECK(!op.lift_rows.empty());
  }
  CHECK_THROWS_AS(reduce_sde_pod_deim(sde, basis,
                                      deim_from_basis(Mat::Identity(32, 2), Vec(), Mat::Identity(32, 3),
                                                      *sde.drift_split)),
                  PreconditionError);
}

TEST_CASE("PSD-SDEIM reduced Hamiltonian system and energy-rate terms") {
  const NlsData& d = nls_data();
  const SnapshotMatrix ps = assemble_snapshots({d.traj}, 2, SnapshotLayout::phase_split);
  const PSDBasis basis = build_psd_cotangent_lift(ps, 4);
  const Mat A = basis.A();
  const SnapshotMatrix ns{d.nonlinear, SnapshotLayout::generic, 0};
  std::mt19937_64 rng(19);
  std::vector<Vec> xis;
  for (Eigen::Index j = 0; j < d.states.cols(); j += 20) xis.push_back(restrict_psd(basis, d.states.col(j)));

  SUBCASE("full interpolation space: exact reduced gradient, zero gamma") {
    const DeimOperator op = deim_from_basis(Mat::Identity(32, 32), Vec(), A, *d.sys.H_split);
    const HamiltonianSDESystem red = reduce_hamiltonian_psd_sdeim(d.sys, basis, op);
    const HamiltonianSDESystem psd = reduce_hamiltonian_psd(d.sys, basis);
    CHECK_FALSE(red.separable);
    for (const Vec& xi : xis) {
      CHECK((red.grad_H_at(xi) - psd.grad_H_at(xi)).norm() <= 1e-11 * (1.0 + psd.grad_H_at(xi).norm()));
      CHECK(red.H(xi) == psd.H(xi));
      const DeTerms t = theorem_de_terms(d.sys, basis, op, {}, xi);
      CHECK(std::abs(t.gamma) <= 1e-10 * (1.0 + t.gamma_bound));
      CHECK(t.bounds_hold);
      CHECK(t.bracket_ok);
    }
  }
  SUBCASE("bounds hold across interpolation sizes") {
    for (std::size_t kbar : {1u, 2u, 4u, 8u, 12u}) {
      const DeimOperator op = build_deim(ns, kbar, A, *d.sys.H_split);
      for (const Vec& xi : xis) {
        const DeTerms t = theorem_de_terms(d.sys, basis, op, {}, xi);
        CHECK(t.bounds_hold);
        CHECK(t.gamma_bound >= 0.0);
        CHECK(t.lambda.size() == 1);
        CHECK(t.lambda(0) == 0.0);
      }
    }
  }
  SUBCASE("gamma matches its definition") {
    const DeimOperator op = build_deim(ns, 3, A, *d.sys.H_split);
    const Vec& xi = xis[3];
    const Vec u = A * xi;
    Vec aN(32);
    d.sys.H_split->nonlinear(u, aN);
    const Vec gH = A.transpose() * d.sys.grad_H_at(u);
    Mat Pt = Mat::Zero(3, 32);
    for (std::size_t i = 0; i < 3; ++i) Pt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(op.indices[i])) = 1.0;
    const Vec approx = op.Psi * (Pt * op.Psi).inverse() * (Pt * aN);
    const double expected = gH.dot(canonical_j(4) * (A.transpose() * (approx - aN)));
    const DeTerms t = theorem_de_terms(d.sys, basis, op, {}, xi);
    CHECK(t.gamma == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
  }
  SUBCASE("reduced state dimension is checked") {
    const DeimOperator op = build_deim(ns, 3, A, *d.sys.H_split);
    CHECK_THROWS_AS(theorem_de_terms(d.sys, basis, op, {}, testsys::random_vec(6, rng)), PreconditionError);
  }
}

