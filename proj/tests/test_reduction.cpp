#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "stochrom/benchmarks.hpp"
#include "stochrom/reduction.hpp"
#include "test_systems.hpp"

using namespace stochrom;
using testsys::max_abs;

namespace {

// Singular values from the symmetric eigenproblem of the smaller Gram matrix.
Vec singular_values_oracle(const Mat& D) {
  const Mat G = D.rows() <= D.cols() ? Mat(D * D.transpose()) : Mat(D.transpose() * D);
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  Vec ev = es.eigenvalues().reverse();
  return ev.cwiseMax(0.0).cwiseSqrt();
}

Trajectory make_traj(const RowMat& states) {
  Trajectory t;
  t.grid = TimeGrid(0.0, 0.1, static_cast<std::size_t>(states.rows() - 1));
  t.states = states;
  return t;
}

NLSConfig small_nls(std::size_t N = 16) {
  NLSConfig c;
  c.N = N;
  c.x_max = 20.0;
  c.x_c = 10.0;
  c.beta = 0.15;
  return c;
}

}  // namespace

TEST_CASE("truncated_svd examples") {
  SUBCASE("diag(3, 0)") {
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = 3.0;
    const TruncatedSVD s = truncated_svd(D, 1);
    CHECK(s.sigma(0) == doctest::Approx(3.0));
    CHECK(s.U(0, 0) == doctest::Approx(1.0));
    CHECK(s.U(1, 0) == doctest::Approx(0.0));
  }
  SUBCASE("all ones") {
    const TruncatedSVD s = truncated_svd(Mat::Ones(2, 2), 1);
    CHECK(s.sigma(0) == doctest::Approx(2.0));
    CHECK(s.U(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(s.U(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("identity tie goes to the first column") {
    const TruncatedSVD s = truncated_svd(Mat::Identity(2, 2), 1);
    CHECK(s.sigma(0) == doctest::Approx(1.0));
    CHECK(s.U(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(s.U(1, 0)) <= 1e-15);
  }
  SUBCASE("k out of range") {
    CHECK_THROWS_AS(truncated_svd(Mat::Ones(3, 2), 0), PreconditionError);
    CHECK_THROWS_AS(truncated_svd(Mat::Ones(3, 2), 3), PreconditionError);
    CHECK_THROWS_AS(truncated_svd(Mat::Ones(3, 2), 2), PreconditionError);  // rank 1
  }
}

TEST_CASE("truncated_svd invariants on random matrices") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 64);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = dim(rng), r = trial % 3 == 0 ? 3 * n + 1 : dim(rng);
    const Mat D = testsys::random_mat(n, r, rng);
    const Eigen::Index kmax = std::min(n, r);
    const auto k = static_cast<std::size_t>(1 + trial % kmax);
    const TruncatedSVD s = truncated_svd(D, k);
    const auto kk = static_cast<Eigen::Index>(k);
    CHECK(max_abs(s.U.transpose() * s.U - Mat::Identity(kk, kk)) <= 1e-12);
    CHECK(max_abs(s.V.transpose() * s.V - Mat::Identity(kk, kk)) <= 1e-12);
    for (Eigen::Index i = 1; i < s.all_sigma.size(); ++i) CHECK(s.all_sigma(i) <= s.all_sigma(i - 1));
    CHECK(s.sigma == s.all_sigma.head(kk));
    const Vec oracle = singular_values_oracle(D);
    CHECK((s.all_sigma - oracle.head(s.all_sigma.size())).cwiseAbs().maxCoeff() <= 1e-10 * oracle(0));
    const double resid = (D - s.U * s.sigma.asDiagonal() * s.V.transpose()).squaredNorm();
    const double tail = s.all_sigma.tail(kmax - kk).squaredNorm();
    CHECK(std::abs(resid - tail) <= 1e-8 * std::max(tail, 1e-300) + 1e-12 * D.squaredNorm());
    for (Eigen::Index j = 0; j < kk; ++j) {
      Eigen::Index imax = 0;
      s.U.col(j).cwiseAbs().maxCoeff(&imax);
      CHECK(s.U(imax, j) > 0.0);
    }
  }
}

TEST_CASE("select_rank_energy") {
  CHECK(select_rank_energy(Vec{{3.0, 1.0}}, 0.9) == 1);
  CHECK(select_rank_energy(Vec{{3.0, 1.0}}, 0.95) == 2);
  CHECK(select_rank_energy(Vec{{1.0, 1.0, 1.0, 1.0}}, 0.5) == 2);
  CHECK(select_rank_energy(Vec{{1.0, 0.0}}) == 1);
  CHECK_THROWS_AS(select_rank_energy(Vec{{1.0}}, 0.0), PreconditionError);
}

TEST_CASE("snapshot assembly") {
  RowMat st(5, 4);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) st(i, j) = 10.0 * static_cast<double>(i) + static_cast<double>(j);
  SUBCASE("stride = n_steps keeps the first and last state") {
    const SnapshotMatrix s = assemble_snapshots({make_traj(st)}, 4, SnapshotLayout::generic);
    REQUIRE(s.cols() == 2);
    CHECK(s.data.col(0) == st.row(0).transpose());
    CHECK(s.data.col(1) == st.row(4).transpose());
  }
  SUBCASE("phase split places q columns before p columns") {
    const SnapshotMatrix s = assemble_snapshots({make_traj(st)}, 2, SnapshotLayout::phase_split);
    REQUIRE(s.rows() == 2);
    REQUIRE(s.cols() == 6);
    CHECK(s.n_dof == 2);
    for (Eigen::Index c = 0; c < 3; ++c) {
      CHECK(s.data.col(c) == st.row(2 * c).head(2).transpose());
      CHECK(s.data.col(3 + c) == st.row(2 * c).tail(2).transpose());
    }
  }
  SUBCASE("trajectories are pooled in order") {
    RowMat other = st * 2.0;
    const SnapshotMatrix s = assemble_snapshots({make_traj(st), make_traj(other)}, 1, SnapshotLayout::generic);
    CHECK(s.cols() == 10);
    CHECK(s.data.col(5) == other.row(0).transpose());
  }
  SUBCASE("column count for 24 runs of 20000 steps at stride 10") {
    std::vector<Mat> sampled(24, Mat::Zero(1, 20000 / 10 + 1));
    CHECK(make_snapshots(sampled, SnapshotLayout::generic).cols() == 24u * 2001u);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(assemble_snapshots({}, 1, SnapshotLayout::generic), PreconditionError);
    CHECK_THROWS_AS(assemble_snapshots({make_traj(st)}, 0, SnapshotLayout::generic), PreconditionError);
    RowMat bad(2, 3);
    bad.setZero();
    CHECK_THROWS_AS(assemble_snapshots({make_traj(st), make_traj(bad)}, 1, SnapshotLayout::generic),
                    PreconditionError);
    CHECK_THROWS_AS(assemble_snapshots({make_traj(bad)}, 1, SnapshotLayout::phase_split), PreconditionError);
  }
}

TEST_CASE("POD basis") {
  std::mt19937_64 rng(7);
  const Mat low = testsys::random_mat(12, 3, rng) * testsys::random_mat(3, 20, rng);
  SnapshotMatrix s{low, SnapshotLayout::generic, 0};
  const PODBasis b = build_pod(s, 3);
  CHECK((b.U * b.U.transpose() * low - low).norm() <= 1e-10 * low.norm());
  CHECK(b.sigma_record.size() == 12);
  CHECK_THROWS_AS(build_psd_cotangent_lift(s, 2), PreconditionError);

  SUBCASE("lift after restrict is an idempotent projector") {
    const Mat P = b.U * b.U.transpose();
    CHECK(max_abs(P * P - P) <= 1e-12);
    const Vec u = testsys::random_vec(12, rng);
    CHECK((lift_pod(b, restrict_pod(b, u)) - P * u).norm() <= 1e-13 * u.norm());
  }
  SUBCASE("reduced linear drift is U^T L U") {
    const Mat L = testsys::random_mat(12, 12, rng);
    const SDESystem red = reduce_sde_pod(testsys::linear_sde(L, {Mat::Identity(12, 12)}), b);
    const Vec xi = testsys::random_vec(3, rng);
    CHECK((red.drift_at(xi) - b.U.transpose() * L * b.U * xi).norm() <= 1e-12 * (1.0 + xi.norm()));
    CHECK((red.diffusion_at(xi, 0) - xi).norm() <= 1e-13);
  }
  SUBCASE("identity basis leaves the system unchanged") {
    PODBasis id{Mat::Identity(4, 4), Vec::Ones(4)};
    const SDESystem base = to_sde(kubo_system({0.3}));
    const SDESystem stacked = testsys::linear_sde(testsys::random_mat(4, 4, rng), {testsys::random_mat(4, 4, rng)});
    const SDESystem red = reduce_sde_pod(stacked, id);
    for (int i = 0; i < 5; ++i) {
      const Vec u = testsys::random_vec(4, rng);
      CHECK(red.drift_at(u) == stacked.drift_at(u));
      CHECK(red.diffusion_at(u, 0) == stacked.diffusion_at(u, 0));
    }
    (void)base;
  }
}

TEST_CASE("cotangent-lift PSD basis") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2 + trial * 3;
    SnapshotMatrix s{testsys::random_mat(n, 2 * (n + 2), rng), SnapshotLayout::phase_split,
                     static_cast<std::size_t>(n)};
    const auto k = static_cast<std::size_t>(1 + trial % n);
    const PSDBasis b = build_psd_cotangent_lift(s, k);
    const Mat A = b.A();
    const auto kk = static_cast<Eigen::Index>(k);
    CHECK(max_abs(b.Phi.transpose() * b.Phi - Mat::Identity(kk, kk)) <= 1e-12);
    CHECK(max_abs(A.transpose() * canonical_j(n) * A - canonical_j(k)) <= 1e-12);
    CHECK(max_abs(b.A_plus() * A - Mat::Identity(2 * kk, 2 * kk)) <= 1e-12);
    CHECK(symplecticity_defect(A) <= 1e-12);
  }
}

TEST_CASE("symplectic inverse") {
  CHECK(symplectic_inverse(Mat::Identity(4, 4)) == Mat::Identity(4, 4));
  PSDBasis e1{Mat::Zero(2, 1), {}};
  e1.Phi(0, 0) = 1.0;
  CHECK(max_abs(symplectic_inverse(e1.A()) * e1.A() - Mat::Identity(2, 2)) == 0.0);
  std::mt19937_64 rng(23);
  PSDBasis r{testsys::random_orthonormal(8, 3, rng), {}};
  const Mat A = r.A();
  CHECK(max_abs(symplectic_inverse(A) * A - Mat::Identity(6, 6)) <= 1e-12);
  // Independent formula: J_2k^T A^T J_2n.
  CHECK(max_abs(symplectic_inverse(A) - canonical_j(3).transpose() * A.transpose() * canonical_j(8)) <= 1e-15);
  Mat bad = A;
  bad(0, 0) += 0.1;
  CHECK_THROWS_AS(symplectic_inverse(bad), PreconditionError);
}

TEST_CASE("PSD reduced Hamiltonian systems") {
  std::mt19937_64 rng(29);
  SUBCASE("identity basis") {
    const HamiltonianSDESystem k = kubo_system({0.4, 0.1, 0.9});
    const HamiltonianSDESystem red = reduce_hamiltonian_psd(k, PSDBasis{Mat::Identity(1, 1), {}});
    for (int i = 0; i < 5; ++i) {
      const Vec u = testsys::random_vec(2, rng);
      CHECK(red.H(u) == k.H(u));
      CHECK(red.h(u, 0) == k.h(u, 0));
      CHECK(red.grad_H_at(u) == k.grad_H_at(u));
    }
    CHECK(red.separable);
    CHECK(separability_defect(red, {testsys::random_vec(2, rng)}) == 0.0);
  }
  SUBCASE("reduced NLS gradients, bracket and round trip") {
    const NLSConfig cfg = small_nls();
    const HamiltonianSDESystem full = build_nls_system(cfg);
    PSDBasis b{testsys::random_orthonormal(16, 5, rng), {}};
    const HamiltonianSDESystem red = reduce_hamiltonian_psd(full, b);
    std::vector<Vec> xs;
    for (int i = 0; i < 20; ++i) xs.push_back(testsys::random_vec(10, rng, 0.5));
    CHECK(gradient_check(red, xs) <= 1e-6);
    for (const Vec& xi : xs) {
      const double scale = red.grad_H_at(xi).norm() * red.grad_h_at(xi, 0).norm();
      CHECK(std::abs(poisson_bracket(red, xi, 0)) <= 1e-10 * (1.0 + scale));
      CHECK(red.H(xi) == doctest::Approx(full.H(lift_psd(b, xi))).epsilon(1e-14));
      CHECK((restrict_psd(b, lift_psd(b, xi)) - xi).norm() <= 1e-13 * xi.norm());
    }
  }
  SUBCASE("separability is preserved") {
    HamiltonianSDESystem s = kubo_system({0.2});
    std::vector<HamiltonianSDESystem> v;
    PSDBasis b{Mat::Constant(1, 1, 1.0), {}};
    const HamiltonianSDESystem red = reduce_hamiltonian_psd(s, b);
    CHECK(red.separable);
    CHECK(separability_defect(red, {Vec{{0.3, 0.4}}, Vec{{-1.0, 2.0}}}) <= 1e-14);
  }
}

TEST_CASE("forced reduction") {
  std::mt19937_64 rng(31);
  const double gamma = 0.3;
  const std::size_t n = 6;
  HamiltonianSDESystem sys = kubo_system({0.2});
  // n decoupled oscillators with linear damping on p.
  sys.n_dof = n;
  sys.H = [](const VecIn& u) { return 0.5 * u.squaredNorm(); };
  sys.grad_H = [](const VecIn& u, VecOut g) { g = u; };
  sys.h = [](const VecIn& u, std::size_t) { return 0.1 * u.squaredNorm(); };
  sys.grad_h = [](const VecIn& u, std::size_t, VecOut g) { g = 0.2 * u; };
  sys.grad_h_combined = {};
  sys.H_split.reset();
  sys.h_splits.clear();
  sys.forcing = Forcing{[gamma, n](const VecIn& u, VecOut o) { o = -gamma * u.tail(static_cast<Eigen::Index>(n)); },
                        [n](const VecIn& u, std::size_t, VecOut o) { o = 0.05 * u.head(static_cast<Eigen::Index>(n)); }};
  const PSDBasis b{testsys::random_orthonormal(6, 2, rng), {}};
  const HamiltonianSDESystem red = reduce_forced_hamiltonian(sys, b);
  REQUIRE(red.forcing.has_value());
  for (int i = 0; i < 5; ++i) {
    const Vec xi = testsys::random_vec(4, rng);
    Vec F(2), f(2);
    red.forcing->F(xi, F);
    red.forcing->f(xi, 0, f);
    CHECK((F - (-gamma * xi.tail(2))).norm() <= 1e-14);
    CHECK((f - 0.05 * xi.head(2)).norm() <= 1e-14);
  }
  SUBCASE("zero forcing matches the unforced reduction") {
    HamiltonianSDESystem z = sys;
    z.forcing = Forcing{[](const VecIn&, VecOut o) { o.setZero(); }, {}};
    HamiltonianSDESystem plain = sys;
    plain.forcing.reset();
    const HamiltonianSDESystem a = reduce_forced_hamiltonian(z, b);
    const HamiltonianSDESystem c = reduce_hamiltonian_psd(plain, b);
    const Vec xi = testsys::random_vec(4, rng);
    CHECK(to_sde(a).drift_at(xi) == to_sde(c).drift_at(xi));
  }
  SUBCASE("identity basis keeps the forcing") {
    const HamiltonianSDESystem id = reduce_forced_hamiltonian(sys, PSDBasis{Mat::Identity(6, 6), {}});
    const Vec u = testsys::random_vec(12, rng);
    Vec a(6), c(6);
    id.forcing->F(u, a);
    sys.forcing->F(u, c);
    CHECK(a == c);
  }
  CHECK_THROWS_AS(reduce_forced_hamiltonian(kubo_system({0.1}), PSDBasis{Mat::Identity(1, 1), {}}),
                  PreconditionError);
}

TEST_CASE("full-rank POD reproduces the full trajectory") {
  const NLSConfig cfg = small_nls(8);
  const HamiltonianSDESystem full = build_nls_system(cfg);
  const SDESystem sde = to_sde(full);
  const WienerPath path = generate_wiener({3, 0}, TimeGrid(0.0, 0.01, 200), 1);
  const Vec u0 = soliton_initial_condition(cfg);
  const auto ref = integrate(sde, Method::midpoint, u0, path);
  REQUIRE(ref.ok());
  const SnapshotMatrix snaps = assemble_snapshots({ref.trajectory}, 1, SnapshotLayout::generic);
  const std::size_t rank = select_rank_energy(truncated_svd(snaps, 1).all_sigma, 1.0);
  const PODBasis b = build_pod(snaps, rank);
  const auto red = integrate(reduce_sde_pod(sde, b), Method::midpoint, restrict_pod(b, u0), path);
  REQUIRE(red.ok());
  const RowMat lifted = lift_states(red.trajectory.states, [&](const VecIn& xi) { return lift_pod(b, xi); });
  SolverSettings st;
  for (Eigen::Index i = 0; i < lifted.rows(); ++i)
    CHECK((lifted.row(i) - ref.trajectory.states.row(i)).cwiseAbs().maxCoeff() <=
          10.0 * st.fp_tol * static_cast<double>(i + 1) * 1e3);
}
