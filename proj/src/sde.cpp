#include "stochrom/sde.hpp"

#include <algorithm>
#include <cmath>

namespace stochrom {

Mat canonical_j(std::size_t n) {
  const auto k = static_cast<Eigen::Index>(n);
  Mat j = Mat::Zero(2 * k, 2 * k);
  j.topRightCorner(k, k).setIdentity();
  j.bottomLeftCorner(k, k) = -Mat::Identity(k, k);
  return j;
}

namespace {

SpMat sparse_j(std::size_t n) {
  const auto k = static_cast<Eigen::Index>(n);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * n);
  for (Eigen::Index i = 0; i < k; ++i) {
    t.emplace_back(i, k + i, 1.0);
    t.emplace_back(k + i, i, -1.0);
  }
  SpMat j(2 * k, 2 * k);
  j.setFromTriplets(t.begin(), t.end());
  return j;
}

// Turns a split of grad f into a split of J grad f.
LinearSplit rotate_split(const LinearSplit& s, std::size_t n) {
  LinearSplit out;
  out.L = sparse_j(n) * s.L;
  if (s.nonlinear) {
    auto nl = s.nonlinear;
    out.nonlinear = [nl](const VecIn& u, VecOut o) {
      Vec g(u.size());
      nl(u, g);
      apply_j(g, o);
    };
  }
  if (s.nonlinear_component) {
    auto comp = s.nonlinear_component;
    out.nonlinear_component = [comp, n](const VecIn& u, std::size_t i) {
      return i < n ? comp(u, n + i) : -comp(u, i - n);
    };
  }
  if (s.component_dependencies) {
    auto deps = s.component_dependencies;
    out.component_dependencies = [deps, n](std::size_t i) { return i < n ? deps(n + i) : deps(i - n); };
  }
  return out;
}

}  // namespace

void SDESystem::eval_noise(const VecIn& u, const VecIn& dW, VecOut out) const {
  if (noise) {
    noise(u, dW, out);
    return;
  }
  out.setZero();
  Vec b(static_cast<Eigen::Index>(dim));
  for (std::size_t nu = 0; nu < m; ++nu) {
    const double w = dW(static_cast<Eigen::Index>(nu));
    if (w == 0.0) continue;
    diffusion(u, nu, b);
    out.noalias() += w * b;
  }
}

Vec SDESystem::drift_at(const VecIn& u) const {
  Vec out(static_cast<Eigen::Index>(dim));
  drift(u, out);
  return out;
}

Vec SDESystem::diffusion_at(const VecIn& u, std::size_t nu) const {
  Vec out(static_cast<Eigen::Index>(dim));
  diffusion(u, nu, out);
  return out;
}

void SDESystem::validate() const {
  require(dim >= 1, "sde system: dim must be positive");
  require(m >= 1, "sde system: m must be positive");
  require(static_cast<bool>(drift), "sde system: drift evaluator missing");
  require(static_cast<bool>(diffusion), "sde system: diffusion evaluator missing");
  if (drift_split) {
    require(drift_split->L.rows() == static_cast<Eigen::Index>(dim) &&
                drift_split->L.cols() == static_cast<Eigen::Index>(dim),
            "sde system: split matrix must be dim x dim");
  }
  require(diffusion_splits.empty() || diffusion_splits.size() == m,
          "sde system: need one diffusion split per noise term or none");
}

Vec HamiltonianSDESystem::grad_H_at(const VecIn& u) const {
  Vec g(static_cast<Eigen::Index>(dim()));
  grad_H(u, g);
  return g;
}

Vec HamiltonianSDESystem::grad_h_at(const VecIn& u, std::size_t nu) const {
  Vec g(static_cast<Eigen::Index>(dim()));
  grad_h(u, nu, g);
  return g;
}

void HamiltonianSDESystem::eval_grad_h_combined(const VecIn& u, const VecIn& dW, VecOut out) const {
  if (grad_h_combined) {
    grad_h_combined(u, dW, out);
    return;
  }
  out.setZero();
  Vec g(static_cast<Eigen::Index>(dim()));
  for (std::size_t nu = 0; nu < m; ++nu) {
    const double w = dW(static_cast<Eigen::Index>(nu));
    if (w == 0.0) continue;
    grad_h(u, nu, g);
    out.noalias() += w * g;
  }
}

void HamiltonianSDESystem::validate() const {
  require(n_dof >= 1, "hamiltonian system: n_dof must be positive");
  require(m >= 1, "hamiltonian system: m must be positive");
  require(H && grad_H && h && grad_h, "hamiltonian system: evaluator missing");
  require(h_splits.empty() || h_splits.size() == m,
          "hamiltonian system: need one h split per noise term or none");
}

SDESystem to_sde(const HamiltonianSDESystem& sys) {
  sys.validate();
  const std::size_t n = sys.n_dof;
  SDESystem out;
  out.dim = 2 * n;
  out.m = sys.m;
  const auto forcing = sys.forcing;
  auto grad_H = sys.grad_H;
  out.drift = [grad_H, forcing, n](const VecIn& u, VecOut o) {
    Vec g(u.size());
    grad_H(u, g);
    apply_j(g, o);
    if (forcing && forcing->F) {
      Vec f(static_cast<Eigen::Index>(n));
      forcing->F(u, f);
      o.tail(static_cast<Eigen::Index>(n)) += f;
    }
  };
  auto grad_h = sys.grad_h;
  out.diffusion = [grad_h, forcing, n](const VecIn& u, std::size_t nu, VecOut o) {
    Vec g(u.size());
    grad_h(u, nu, g);
    apply_j(g, o);
    if (forcing && forcing->f) {
      Vec f(static_cast<Eigen::Index>(n));
      forcing->f(u, nu, f);
      o.tail(static_cast<Eigen::Index>(n)) += f;
    }
  };
  if (sys.grad_h_combined) {
    auto combined = sys.grad_h_combined;
    const std::size_t m = sys.m;
    out.noise = [combined, forcing, n, m](const VecIn& u, const VecIn& dW, VecOut o) {
      Vec g(u.size());
      combined(u, dW, g);
      apply_j(g, o);
      if (forcing && forcing->f) {
        Vec f(static_cast<Eigen::Index>(n));
        for (std::size_t nu = 0; nu < m; ++nu) {
          const double w = dW(static_cast<Eigen::Index>(nu));
          if (w == 0.0) continue;
          forcing->f(u, nu, f);
          o.tail(static_cast<Eigen::Index>(n)) += w * f;
        }
      }
    };
  }
  // A split only describes the drift when there is no forcing.
  if (!sys.forcing) {
    if (sys.H_split) out.drift_split = rotate_split(*sys.H_split, n);
    for (const LinearSplit& s : sys.h_splits) out.diffusion_splits.push_back(rotate_split(s, n));
  }
  return out;
}

double poisson_bracket(const HamiltonianSDESystem& sys, const VecIn& u, std::size_t nu) {
  require(nu < sys.m, "poisson_bracket: noise index out of range");
  const auto n = static_cast<Eigen::Index>(sys.n_dof);
  const Vec gH = sys.grad_H_at(u);
  const Vec gh = sys.grad_h_at(u, nu);
  return gH.head(n).dot(gh.tail(n)) - gH.tail(n).dot(gh.head(n));
}

namespace {

Vec fd_gradient(const std::function<double(const VecIn&)>& f, const Vec& u, double step) {
  Vec g(u.size());
  Vec x = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double h = step * std::max(1.0, std::fabs(u(i)));
    x(i) = u(i) + h;
    const double fp = f(x);
    x(i) = u(i) - h;
    const double fm = f(x);
    x(i) = u(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_gap(const Vec& a, const Vec& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace

double gradient_check(const HamiltonianSDESystem& sys, const std::vector<Vec>& states, double step) {
  double worst = 0.0;
  for (const Vec& u : states) {
    require(u.size() == static_cast<Eigen::Index>(sys.dim()), "gradient_check: state dimension mismatch");
    worst = std::max(worst, relative_gap(fd_gradient(sys.H, u, step), sys.grad_H_at(u)));
    for (std::size_t nu = 0; nu < sys.m; ++nu) {
      auto hnu = [&](const VecIn& x) { return sys.h(x, nu); };
      worst = std::max(worst, relative_gap(fd_gradient(hnu, u, step), sys.grad_h_at(u, nu)));
    }
  }
  return worst;
}

double separability_defect(const HamiltonianSDESystem& sys, const std::vector<Vec>& states,
                           double perturbation) {
  const auto n = static_cast<Eigen::Index>(sys.n_dof);
  double worst = 0.0;
  auto probe = [&](const std::function<Vec(const Vec&)>& grad, const Vec& u) {
    const Vec g0 = grad(u);
    Vec up = u;
    up.tail(n).array() += perturbation;
    const Vec gp = grad(up);
    Vec uq = u;
    uq.head(n).array() += perturbation;
    const Vec gq = grad(uq);
    worst = std::max(worst, (gp.head(n) - g0.head(n)).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (gq.tail(n) - g0.tail(n)).lpNorm<Eigen::Infinity>());
  };
  for (const Vec& u : states) {
    probe([&](const Vec& x) { return sys.grad_H_at(x); }, u);
    for (std::size_t nu = 0; nu < sys.m; ++nu) probe([&](const Vec& x) { return sys.grad_h_at(x, nu); }, u);
  }
  return worst;
}

double split_defect(const SDESystem& sys, const std::vector<Vec>& states) {
  require(sys.drift_split.has_value(), "split_defect: system has no drift split");
  const LinearSplit& s = *sys.drift_split;
  double worst = 0.0;
  for (const Vec& u : states) {
    const Vec a = sys.drift_at(u);
    Vec split = s.L * u;
    if (s.nonlinear) {
      Vec nl(u.size());
      s.nonlinear(u, nl);
      split += nl;
    }
    worst = std::max(worst, (a - split).lpNorm<Eigen::Infinity>() / (1.0 + a.lpNorm<Eigen::Infinity>()));
  }
  return worst;
}

}  // namespace stochrom
