#include "stochrom/monte_carlo.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace stochrom {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Gathers (Q_nu, P_nu) out of a stacked Hamiltonian state.
void gather(const VecIn& u, Index n, Index nM, Index nu, Vec& x) {
  x.head(n) = u.segment(nu * n, n);
  x.tail(n) = u.segment(nM + nu * n, n);
}

void scatter(const Vec& g, Index n, Index nM, Index nu, VecOut out) {
  out.segment(nu * n, n) = g.head(n);
  out.segment(nM + nu * n, n) = g.tail(n);
}

}  // namespace

SDESystem stack_sde(const SDESystem& base, std::size_t M) {
  base.validate();
  require(M >= 1, "stack_sde: M must be at least 1");
  const Index N = idx(base.dim);
  const Index mb = idx(base.m);
  const Index Mi = idx(M);
  auto b = std::make_shared<const SDESystem>(base);
  SDESystem out;
  out.dim = base.dim * M;
  out.m = base.m * M;
  out.drift = [b, N, Mi](const VecIn& u, VecOut o) {
    for (Index nu = 0; nu < Mi; ++nu) b->drift(u.segment(nu * N, N), o.segment(nu * N, N));
  };
  out.diffusion = [b, N, mb](const VecIn& u, std::size_t c, VecOut o) {
    const Index nu = idx(c) / mb;
    o.setZero();
    b->diffusion(u.segment(nu * N, N), c % b->m, o.segment(nu * N, N));
  };
  out.noise = [b, N, mb, Mi](const VecIn& u, const VecIn& dW, VecOut o) {
    for (Index nu = 0; nu < Mi; ++nu) b->eval_noise(u.segment(nu * N, N), dW.segment(nu * mb, mb), o.segment(nu * N, N));
  };
  if (base.drift_split) {
    const LinearSplit& s = *base.drift_split;
    LinearSplit st;
    std::vector<Eigen::Triplet<double>> t;
    for (Index nu = 0; nu < Mi; ++nu)
      for (Index c = 0; c < s.L.outerSize(); ++c)
        for (SpMat::InnerIterator it(s.L, c); it; ++it) t.emplace_back(nu * N + it.row(), nu * N + it.col(), it.value());
    st.L.resize(N * Mi, N * Mi);
    st.L.setFromTriplets(t.begin(), t.end());
    if (s.nonlinear) {
      auto nl = s.nonlinear;
      st.nonlinear = [nl, N, Mi](const VecIn& u, VecOut o) {
        for (Index nu = 0; nu < Mi; ++nu) nl(u.segment(nu * N, N), o.segment(nu * N, N));
      };
    }
    if (s.nonlinear_component) {
      auto comp = s.nonlinear_component;
      st.nonlinear_component = [comp, N](const VecIn& u, std::size_t i) {
        const Index nu = idx(i) / N;
        return comp(u.segment(nu * N, N), i % static_cast<std::size_t>(N));
      };
    }
    if (s.component_dependencies) {
      auto deps = s.component_dependencies;
      st.component_dependencies = [deps, N](std::size_t i) {
        const std::size_t off = i - i % static_cast<std::size_t>(N);
        std::vector<std::size_t> d = deps(i % static_cast<std::size_t>(N));
        for (std::size_t& r : d) r += off;
        return d;
      };
    }
    out.drift_split = std::move(st);
  }
  return out;
}

HamiltonianSDESystem stack_hamiltonian(const HamiltonianSDESystem& base, std::size_t M) {
  base.validate();
  require(M >= 1, "stack_hamiltonian: M must be at least 1");
  require(!base.forcing, "stack_hamiltonian: forced base systems are not supported");
  const Index n = idx(base.n_dof);
  const Index mb = idx(base.m);
  const Index Mi = idx(M);
  const Index nM = n * Mi;
  auto b = std::make_shared<const HamiltonianSDESystem>(base);
  HamiltonianSDESystem out;
  out.n_dof = base.n_dof * M;
  out.m = base.m * M;
  out.separable = base.separable;
  out.H = [b, n, nM, Mi](const VecIn& u) {
    Vec x(2 * n);
    std::vector<double> vals(static_cast<std::size_t>(Mi));
    for (Index nu = 0; nu < Mi; ++nu) {
      gather(u, n, nM, nu, x);
      vals[static_cast<std::size_t>(nu)] = b->H(x);
    }
    return pairwise_sum(vals.data(), vals.size());
  };
  out.grad_H = [b, n, nM, Mi](const VecIn& u, VecOut o) {
    Vec x(2 * n), g(2 * n);
    for (Index nu = 0; nu < Mi; ++nu) {
      gather(u, n, nM, nu, x);
      b->grad_H(x, g);
      scatter(g, n, nM, nu, o);
    }
  };
  out.h = [b, n, nM, mb](const VecIn& u, std::size_t c) {
    Vec x(2 * n);
    gather(u, n, nM, idx(c) / mb, x);
    return b->h(x, c % b->m);
  };
  out.grad_h = [b, n, nM, mb](const VecIn& u, std::size_t c, VecOut o) {
    Vec x(2 * n), g(2 * n);
    gather(u, n, nM, idx(c) / mb, x);
    b->grad_h(x, c % b->m, g);
    o.setZero();
    scatter(g, n, nM, idx(c) / mb, o);
  };
  out.grad_h_combined = [b, n, nM, mb, Mi](const VecIn& u, const VecIn& dW, VecOut o) {
    Vec x(2 * n), g(2 * n);
    for (Index nu = 0; nu < Mi; ++nu) {
      gather(u, n, nM, nu, x);
      b->eval_grad_h_combined(x, dW.segment(nu * mb, mb), g);
      scatter(g, n, nM, nu, o);
    }
  };
  if (base.H_split) {
    const LinearSplit& s = *base.H_split;
    auto map_index = [n, nM](Index nu, Index i) { return i < n ? nu * n + i : nM + nu * n + (i - n); };
    LinearSplit st;
    std::vector<Eigen::Triplet<double>> t;
    for (Index nu = 0; nu < Mi; ++nu)
      for (Index c = 0; c < s.L.outerSize(); ++c)
        for (SpMat::InnerIterator it(s.L, c); it; ++it)
          t.emplace_back(map_index(nu, it.row()), map_index(nu, it.col()), it.value());
    st.L.resize(2 * nM, 2 * nM);
    st.L.setFromTriplets(t.begin(), t.end());
    if (s.nonlinear) {
      auto nl = s.nonlinear;
      st.nonlinear = [nl, n, nM, Mi](const VecIn& u, VecOut o) {
        Vec x(2 * n), g(2 * n);
        for (Index nu = 0; nu < Mi; ++nu) {
          gather(u, n, nM, nu, x);
          nl(x, g);
          scatter(g, n, nM, nu, o);
        }
      };
    }
    if (s.nonlinear_component) {
      auto comp = s.nonlinear_component;
      st.nonlinear_component = [comp, n, nM](const VecIn& u, std::size_t s_i) {
        const Index si = idx(s_i);
        const Index nu = si < nM ? si / n : (si - nM) / n;
        const Index i = si < nM ? si % n : n + (si - nM) % n;
        Vec x(2 * n);
        gather(u, n, nM, nu, x);
        return comp(x, static_cast<std::size_t>(i));
      };
    }
    if (s.component_dependencies) {
      auto deps = s.component_dependencies;
      st.component_dependencies = [deps, n, nM, map_index](std::size_t s_i) {
        const Index si = idx(s_i);
        const Index nu = si < nM ? si / n : (si - nM) / n;
        const Index i = si < nM ? si % n : n + (si - nM) % n;
        std::vector<std::size_t> d = deps(static_cast<std::size_t>(i));
        for (std::size_t& r : d) r = static_cast<std::size_t>(map_index(nu, idx(r)));
        return d;
      };
    }
    out.H_split = std::move(st);
  }
  return out;
}

Vec stacked_block(const VecIn& u, std::size_t base_dim, std::size_t M, std::size_t nu) {
  require(static_cast<std::size_t>(u.size()) == base_dim * M && nu < M, "stacked_block: shape mismatch");
  return u.segment(idx(nu * base_dim), idx(base_dim));
}

Vec stacked_hamiltonian_block(const VecIn& u, std::size_t base_dof, std::size_t M, std::size_t nu) {
  require(static_cast<std::size_t>(u.size()) == 2 * base_dof * M && nu < M,
          "stacked_hamiltonian_block: shape mismatch");
  Vec x(idx(2 * base_dof));
  gather(u, idx(base_dof), idx(base_dof * M), idx(nu), x);
  return x;
}

WienerPath path_block(const WienerPath& path, std::size_t m_base, std::size_t nu) {
  require(m_base >= 1 && (nu + 1) * m_base <= path.m(), "path_block: block out of range");
  return WienerPath(path.grid(), m_base, path.rng(), path.increments().middleCols(idx(nu * m_base), idx(m_base)));
}

Mat BlockBasis::assemble() const {
  require(!blocks.empty(), "block basis: no blocks");
  Index rows = 0;
  for (const Mat& b : blocks) rows += b.rows();
  Mat out(rows, blocks.front().cols());
  Index r = 0;
  for (const Mat& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

BlockBasis BlockBasis::split(const Mat& basis, std::size_t block_rows) {
  require(block_rows >= 1 && basis.rows() % idx(block_rows) == 0,
          "block basis: row count must be a multiple of the block size");
  BlockBasis out;
  const Index br = idx(block_rows);
  for (Index r = 0; r < basis.rows(); r += br) out.blocks.push_back(basis.middleRows(r, br));
  return out;
}

SDESystem block_reduced_sde(const SDESystem& base, const BlockBasis& U) {
  base.validate();
  require(U.M() >= 1, "block_reduced_sde: empty basis");
  for (const Mat& b : U.blocks)
    require(b.rows() == idx(base.dim) && b.cols() == idx(U.k()), "block_reduced_sde: block shape mismatch");
  auto bs = std::make_shared<const SDESystem>(base);
  auto blocks = std::make_shared<const std::vector<Mat>>(U.blocks);
  const Index N = idx(base.dim);
  const Index mb = idx(base.m);
  SDESystem out;
  out.dim = U.k();
  out.m = base.m * U.M();
  out.drift = [bs, blocks, N](const VecIn& xi, VecOut o) {
    Vec x(N), a(N);
    o.setZero();
    for (const Mat& B : *blocks) {
      x.noalias() = B * xi;
      bs->drift(x, a);
      o.noalias() += B.transpose() * a;
    }
  };
  out.diffusion = [bs, blocks, N, mb](const VecIn& xi, std::size_t c, VecOut o) {
    const Mat& B = (*blocks)[c / static_cast<std::size_t>(mb)];
    Vec x = B * xi;
    Vec b(N);
    bs->diffusion(x, c % bs->m, b);
    o.noalias() = B.transpose() * b;
  };
  out.noise = [bs, blocks, N, mb](const VecIn& xi, const VecIn& dW, VecOut o) {
    Vec x(N), b(N);
    o.setZero();
    for (std::size_t nu = 0; nu < blocks->size(); ++nu) {
      const Mat& B = (*blocks)[nu];
      x.noalias() = B * xi;
      bs->eval_noise(x, dW.segment(idx(nu) * mb, mb), b);
      o.noalias() += B.transpose() * b;
    }
  };
  return out;
}

HamiltonianSDESystem block_reduced_hamiltonian(const HamiltonianSDESystem& base, const BlockBasis& Phi) {
  base.validate();
  require(!base.forcing, "block_reduced_hamiltonian: forced base systems are not supported");
  require(Phi.M() >= 1, "block_reduced_hamiltonian: empty basis");
  for (const Mat& b : Phi.blocks)
    require(b.rows() == idx(base.n_dof) && b.cols() == idx(Phi.k()), "block_reduced_hamiltonian: block shape mismatch");
  auto bs = std::make_shared<const HamiltonianSDESystem>(base);
  auto blocks = std::make_shared<const std::vector<Mat>>(Phi.blocks);
  const Index n = idx(base.n_dof);
  const Index k = idx(Phi.k());
  const Index mb = idx(base.m);

  auto lift = [n, k](const Mat& B, const VecIn& xi, Vec& x) {
    x.head(n).noalias() = B * xi.head(k);
    x.tail(n).noalias() = B * xi.tail(k);
  };
  auto accumulate = [n, k](const Mat& B, const Vec& g, VecOut o) {
    o.head(k).noalias() += B.transpose() * g.head(n);
    o.tail(k).noalias() += B.transpose() * g.tail(n);
  };

  HamiltonianSDESystem out;
  out.n_dof = Phi.k();
  out.m = base.m * Phi.M();
  out.separable = base.separable;
  out.H = [bs, blocks, n, lift](const VecIn& xi) {
    Vec x(2 * n);
    std::vector<double> vals;
    vals.reserve(blocks->size());
    for (const Mat& B : *blocks) {
      lift(B, xi, x);
      vals.push_back(bs->H(x));
    }
    return pairwise_sum(vals.data(), vals.size());
  };
  out.grad_H = [bs, blocks, n, lift, accumulate](const VecIn& xi, VecOut o) {
    Vec x(2 * n), g(2 * n);
    o.setZero();
    for (const Mat& B : *blocks) {
      lift(B, xi, x);
      bs->grad_H(x, g);
      accumulate(B, g, o);
    }
  };
  out.h = [bs, blocks, n, mb, lift](const VecIn& xi, std::size_t c) {
    Vec x(2 * n);
    lift((*blocks)[c / static_cast<std::size_t>(mb)], xi, x);
    return bs->h(x, c % bs->m);
  };
  out.grad_h = [bs, blocks, n, mb, lift, accumulate](const VecIn& xi, std::size_t c, VecOut o) {
    const Mat& B = (*blocks)[c / static_cast<std::size_t>(mb)];
    Vec x(2 * n), g(2 * n);
    lift(B, xi, x);
    bs->grad_h(x, c % bs->m, g);
    o.setZero();
    accumulate(B, g, o);
  };
  out.grad_h_combined = [bs, blocks, n, mb, lift, accumulate](const VecIn& xi, const VecIn& dW, VecOut o) {
    Vec x(2 * n), g(2 * n);
    o.setZero();
    for (std::size_t nu = 0; nu < blocks->size(); ++nu) {
      const Mat& B = (*blocks)[nu];
      lift(B, xi, x);
      bs->eval_grad_h_combined(x, dW.segment(idx(nu) * mb, mb), g);
      accumulate(B, g, o);
    }
  };
  return out;
}

double pairwise_sum(const double* x, std::size_t n, std::size_t stride) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i * stride];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half, stride) + pairwise_sum(x + half * stride, n - half, stride);
}

RowMat ensemble_mean(const std::vector<RowMat>& paths) {
  require(!paths.empty(), "ensemble_mean: empty ensemble");
  const Index T = paths.front().rows();
  const Index d = paths.front().cols();
  for (const RowMat& p : paths) require(p.rows() == T && p.cols() == d, "ensemble_mean: inconsistent path shapes");
  RowMat mean(T, d);
  std::vector<double> buf(paths.size());
  const double inv = 1.0 / static_cast<double>(paths.size());
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < d; ++j) {
      for (std::size_t p = 0; p < paths.size(); ++p) buf[p] = paths[p](t, j);
      mean(t, j) = pairwise_sum(buf.data(), buf.size()) * inv;
    }
  }
  return mean;
}

ErrorTraces error_metrics(const std::vector<RowMat>& reconstructed, const std::vector<RowMat>& reference,
                          std::size_t path_index) {
  require(!reference.empty() && reconstructed.size() == reference.size(),
          "error_metrics: ensembles must be nonempty and of equal size");
  require(path_index < reference.size(), "error_metrics: path index out of range");
  const Index T = reference.front().rows();
  const Index d = reference.front().cols();
  for (std::size_t p = 0; p < reference.size(); ++p) {
    require(reference[p].rows() == T && reference[p].cols() == d && reconstructed[p].rows() == T &&
                reconstructed[p].cols() == d,
            "error_metrics: inconsistent path shapes");
  }
  constexpr double tiny = 1e-30;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const RowMat mean_rec = ensemble_mean(reconstructed);
  const RowMat mean_ref = ensemble_mean(reference);
  const std::size_t M = reference.size();
  ErrorTraces out;
  out.E1.resize(T);
  out.E2.resize(T);
  out.E3.resize(T);
  std::vector<double> num(M), den(M);
  for (Index t = 0; t < T; ++t) {
    const double d1 = reference[path_index].row(t).norm();
    out.E1(t) = d1 < tiny ? nan : (reconstructed[path_index].row(t) - reference[path_index].row(t)).norm() / d1;
    for (std::size_t p = 0; p < M; ++p) {
      num[p] = (reconstructed[p].row(t) - reference[p].row(t)).squaredNorm();
      den[p] = reference[p].row(t).squaredNorm();
    }
    const double d2 = std::sqrt(pairwise_sum(den.data(), M) / static_cast<double>(M));
    out.E2(t) = d2 < tiny ? nan : std::sqrt(pairwise_sum(num.data(), M) / static_cast<double>(M)) / d2;
    const double d3 = mean_ref.row(t).norm();
    out.E3(t) = d3 < tiny ? nan : (mean_rec.row(t) - mean_ref.row(t)).norm() / d3;
  }
  return out;
}

}  // namespace stochrom
