#include "stochrom/benchmarks.hpp"

#include <cmath>
#include <limits>

#include "stochrom/kernels.hpp"

namespace stochrom {

void NLSConfig::validate() const {
  require(N >= 3, "nls: N must be at least 3");
  require(std::isfinite(x_max) && x_max > 0.0, "nls: x_max must be positive");
  require(std::isfinite(eps) && std::isfinite(beta) && std::isfinite(c) && std::isfinite(x_c),
          "nls: parameters must be finite");
}

namespace {

SpMat nls_linear_part(std::size_t N, double dx) {
  const auto n = static_cast<Eigen::Index>(N);
  const double w = 1.0 / (dx * dx);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(6 * N);
  for (Eigen::Index block = 0; block < 2; ++block) {
    const Eigen::Index o = block * n;
    for (Eigen::Index j = 0; j < n; ++j) {
      t.emplace_back(o + j, o + j, 2.0 * w);
      t.emplace_back(o + j, o + (j + 1) % n, -w);
      t.emplace_back(o + j, o + (j + n - 1) % n, -w);
    }
  }
  SpMat L(2 * n, 2 * n);
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

}  // namespace

HamiltonianSDESystem build_nls_system(const NLSConfig& cfg) {
  cfg.validate();
  const std::size_t N = cfg.N;
  const auto n = static_cast<Eigen::Index>(N);
  const double dx = cfg.dx();
  const double inv_dx2 = 1.0 / (dx * dx);
  const double eps = cfg.eps;
  const double beta = cfg.beta;

  HamiltonianSDESystem sys;
  sys.n_dof = N;
  sys.m = 1;
  sys.separable = false;
  sys.H = [n, dx, eps](const VecIn& u) {
    const auto q = u.head(n);
    const auto p = u.tail(n);
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index jp = (j + 1) % n;
      const double dq = (q(jp) - q(j)) / dx;
      const double dp = (p(jp) - p(j)) / dx;
      const double r = q(j) * q(j) + p(j) * p(j);
      s += 0.5 * dq * dq + 0.5 * dp * dp - 0.25 * eps * r * r;
    }
    return s;
  };
  sys.grad_H = [N, n, inv_dx2, eps](const VecIn& u, VecOut g) {
    kernels::active().nls_gradient(N, u.data(), u.data() + n, inv_dx2, eps, g.data(), g.data() + n);
  };
  sys.h = [beta](const VecIn& u, std::size_t) { return -0.5 * beta * u.squaredNorm(); };
  sys.grad_h = [beta](const VecIn& u, std::size_t, VecOut g) { g = -beta * u; };
  sys.grad_h_combined = [beta](const VecIn& u, const VecIn& dW, VecOut g) { g = (-beta * dW(0)) * u; };

  LinearSplit hs;
  hs.L = nls_linear_part(N, dx);
  hs.nonlinear = [n, eps](const VecIn& u, VecOut o) {
    const auto q = u.head(n);
    const auto p = u.tail(n);
    const Vec r = q.array().square() + p.array().square();
    o.head(n) = -eps * (r.array() * q.array());
    o.tail(n) = -eps * (r.array() * p.array());
  };
  hs.nonlinear_component = [N, eps](const VecIn& u, std::size_t i) {
    const std::size_t j = i < N ? i : i - N;
    const double q = u(static_cast<Eigen::Index>(j));
    const double p = u(static_cast<Eigen::Index>(N + j));
    const double r = q * q + p * p;
    return -eps * (r * (i < N ? q : p));
  };
  hs.component_dependencies = [N](std::size_t i) {
    const std::size_t j = i < N ? i : i - N;
    return std::vector<std::size_t>{j, N + j};
  };
  sys.H_split = std::move(hs);

  LinearSplit ls;
  SpMat I(2 * n, 2 * n);
  I.setIdentity();
  ls.L = -beta * I;
  sys.h_splits.push_back(std::move(ls));
  return sys;
}

Vec nls_mesh(const NLSConfig& cfg) {
  cfg.validate();
  Vec x(static_cast<Eigen::Index>(cfg.N));
  for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = static_cast<double>(j) * cfg.dx();
  return x;
}

Vec soliton_initial_condition(const NLSConfig& cfg) {
  const Vec x = nls_mesh(cfg);
  const auto n = x.size();
  Vec u(2 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = x(j) - cfg.x_c;
    const double amp = std::sqrt(2.0) / std::cosh(s);
    u(j) = amp * std::cos(0.5 * cfg.c * s);
    u(n + j) = amp * std::sin(0.5 * cfg.c * s);
  }
  return u;
}

Vec soliton_modulus_oracle(const NLSConfig& cfg, double t) {
  require(cfg.eps == 1.0, "soliton_modulus_oracle: only valid for eps = 1");
  const Vec x = nls_mesh(cfg);
  const double L = cfg.x_max;
  Vec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double s = std::fmod(x(j) - cfg.x_c - cfg.c * t, L);
    if (s < -0.5 * L) s += L;
    if (s >= 0.5 * L) s -= L;
    out(j) = std::sqrt(2.0) / std::cosh(s);
  }
  return out;
}

Vec nls_modulus(const VecIn& u) {
  require(u.size() % 2 == 0, "nls_modulus: state dimension must be even");
  const auto n = u.size() / 2;
  return (u.head(n).array().square() + u.tail(n).array().square()).sqrt();
}

double nls_error_e1(const VecIn& u, const VecIn& u_ref, double dx) {
  require(u.size() == u_ref.size() && u.size() % 2 == 0, "nls_error_e1: shape mismatch");
  const double den = dx * u_ref.squaredNorm();
  if (!(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(dx * (u - u_ref).squaredNorm() / den);
}

double nls_error_e2(const RowMat& states, const RowMat& ref, double dx, double dt) {
  require(states.rows() == ref.rows() && states.cols() == ref.cols() && ref.rows() >= 2,
          "nls_error_e2: shape mismatch");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i + 1 < ref.rows(); ++i) {
    num += dt * dx * (states.row(i) - ref.row(i)).squaredNorm();
    den += dt * dx * ref.row(i).squaredNorm();
  }
  if (!(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(num / den);
}

HamiltonianSDESystem kubo_system(const KuboConfig& cfg) {
  require(std::isfinite(cfg.beta) && std::isfinite(cfg.q0) && std::isfinite(cfg.p0), "kubo: parameters must be finite");
  const double beta = cfg.beta;
  HamiltonianSDESystem sys;
  sys.n_dof = 1;
  sys.m = 1;
  sys.separable = true;
  sys.H = [](const VecIn& u) { return 0.5 * (u(0) * u(0) + u(1) * u(1)); };
  sys.grad_H = [](const VecIn& u, VecOut g) { g = u; };
  sys.h = [beta](const VecIn& u, std::size_t) { return beta * (0.5 * (u(0) * u(0) + u(1) * u(1))); };
  sys.grad_h = [beta](const VecIn& u, std::size_t, VecOut g) { g = beta * u; };
  sys.grad_h_combined = [beta](const VecIn& u, const VecIn& dW, VecOut g) { g = (beta * dW(0)) * u; };
  LinearSplit hs;
  hs.L.resize(2, 2);
  hs.L.setIdentity();
  sys.H_split = hs;
  LinearSplit ls;
  ls.L = beta * hs.L;
  sys.h_splits.push_back(std::move(ls));
  return sys;
}

Vec kubo_initial_condition(const KuboConfig& cfg) { return Vec{{cfg.q0, cfg.p0}}; }

Vec kubo_exact_state(const KuboConfig& cfg, double t, double W) {
  const double th = t + cfg.beta * W;
  const double s = std::sin(th);
  const double c = std::cos(th);
  return Vec{{cfg.p0 * s + cfg.q0 * c, cfg.p0 * c - cfg.q0 * s}};
}

Trajectory kubo_exact(const KuboConfig& cfg, const WienerPath& path, std::size_t column) {
  require(column < path.m(), "kubo_exact: path column out of range");
  const Vec W = path.running_sum(column);
  Trajectory traj;
  traj.grid = path.grid();
  traj.method = Method::exact;
  traj.states.resize(W.size(), 2);
  for (Eigen::Index i = 0; i < W.size(); ++i)
    traj.states.row(i) = kubo_exact_state(cfg, static_cast<double>(i) * traj.grid.dt, W(i)).transpose();
  return traj;
}

Vec kubo_exact_mean(const KuboConfig& cfg, double t) {
  const double d = std::exp(-0.5 * cfg.beta * cfg.beta * t);
  return Vec{{d * (cfg.p0 * std::sin(t) + cfg.q0 * std::cos(t)), d * (cfg.p0 * std::cos(t) - cfg.q0 * std::sin(t))}};
}

}  // namespace stochrom
