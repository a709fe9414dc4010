#include "stochrom/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace stochrom {

void SnapshotMatrix::validate() const {
  require(data.size() > 0, "snapshots: empty matrix");
  require(data.allFinite(), "snapshots: entries must be finite");
  if (layout == SnapshotLayout::phase_split) {
    require(data.cols() % 2 == 0, "snapshots: phase_split needs an even column count");
    require(n_dof == rows(), "snapshots: phase_split rows must equal n_dof");
  }
}

Mat sample_states(const Trajectory& traj, std::size_t stride) {
  require(stride >= 1, "sample_states: stride must be at least 1");
  require(traj.rows() >= 1, "sample_states: empty trajectory");
  const std::size_t r = (traj.rows() - 1) / stride + 1;
  Mat out(traj.states.cols(), static_cast<Eigen::Index>(r));
  for (std::size_t j = 0; j < r; ++j)
    out.col(static_cast<Eigen::Index>(j)) = traj.states.row(static_cast<Eigen::Index>(j * stride)).transpose();
  return out;
}

SnapshotMatrix make_snapshots(const std::vector<Mat>& sampled, SnapshotLayout layout) {
  require(!sampled.empty(), "snapshots: no input data");
  const Eigen::Index dim = sampled.front().rows();
  Eigen::Index cols = 0;
  for (const Mat& s : sampled) {
    require(s.rows() == dim, "snapshots: inconsistent state dimensions");
    cols += s.cols();
  }
  require(dim >= 1 && cols >= 1, "snapshots: no input data");
  SnapshotMatrix out;
  out.layout = layout;
  if (layout == SnapshotLayout::generic) {
    out.data.resize(dim, cols);
    Eigen::Index c = 0;
    for (const Mat& s : sampled) {
      out.data.middleCols(c, s.cols()) = s;
      c += s.cols();
    }
  } else {
    require(dim % 2 == 0, "snapshots: phase_split needs an even state dimension");
    const Eigen::Index n = dim / 2;
    out.n_dof = static_cast<std::size_t>(n);
    out.data.resize(n, 2 * cols);
    Eigen::Index c = 0;
    for (const Mat& s : sampled) {
      out.data.middleCols(c, s.cols()) = s.topRows(n);
      out.data.middleCols(cols + c, s.cols()) = s.bottomRows(n);
      c += s.cols();
    }
  }
  out.validate();
  return out;
}

SnapshotMatrix assemble_snapshots(const std::vector<Trajectory>& trajectories, std::size_t stride,
                                  SnapshotLayout layout) {
  require(!trajectories.empty(), "assemble_snapshots: no trajectories");
  std::vector<Mat> sampled;
  sampled.reserve(trajectories.size());
  for (const Trajectory& t : trajectories) sampled.push_back(sample_states(t, stride));
  return make_snapshots(sampled, layout);
}

Mat map_columns(const Mat& states, const FieldFn& f, std::size_t out_dim) {
  Mat out(static_cast<Eigen::Index>(out_dim), states.cols());
  Vec buf(static_cast<Eigen::Index>(out_dim));
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    f(states.col(j), buf);
    out.col(j) = buf;
  }
  return out;
}

namespace {

void apply_sign_convention(Mat& U, Mat& V) {
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      const double a = std::fabs(U(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (U(best, j) < 0.0) {
      U.col(j) = -U.col(j);
      V.col(j) = -V.col(j);
    }
  }
}

}  // namespace

TruncatedSVD truncated_svd(const Mat& data, std::size_t k) {
  const Eigen::Index n = data.rows();
  const Eigen::Index r = data.cols();
  require(n >= 1 && r >= 1, "truncated_svd: empty matrix");
  require(data.allFinite(), "truncated_svd: entries must be finite");
  const auto kk = static_cast<Eigen::Index>(k);
  if (k < 1 || kk > std::min(n, r)) {
    std::ostringstream os;
    os << "truncated_svd: k = " << k << " outside [1, " << std::min(n, r) << "]";
    throw PreconditionError(os.str());
  }

  Mat U, V;
  Vec s;
  if (r > 2 * n) {
    // Wide matrix: data^T = Q R, so data = R^T Q^T and the SVD of the small
    // factor R^T carries over with V = Q V~.
    Eigen::HouseholderQR<Mat> qr(data.transpose());
    const Mat R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const Mat Q = qr.householderQ() * Mat::Identity(r, n);
    Eigen::BDCSVD<Mat> svd(R.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    U = svd.matrixU();
    V = Q * svd.matrixV();
    s = svd.singularValues();
  } else {
    Eigen::BDCSVD<Mat> svd(data, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U = svd.matrixU();
    V = svd.matrixV();
    s = svd.singularValues();
  }

  TruncatedSVD out;
  out.all_sigma = s;
  out.sigma = s.head(kk);
  out.U = U.leftCols(kk);
  out.V = V.leftCols(kk);
  const double rank_tol = std::numeric_limits<double>::epsilon() *
                          static_cast<double>(std::max(n, r)) * s(0);
  if (!(out.sigma(kk - 1) > rank_tol)) {
    std::ostringstream os;
    os << "truncated_svd: k = " << k << " exceeds the numerical rank (sigma_k = " << out.sigma(kk - 1) << ")";
    throw PreconditionError(os.str());
  }
  apply_sign_convention(out.U, out.V);
  return out;
}

TruncatedSVD truncated_svd(const SnapshotMatrix& snapshots, std::size_t k) {
  snapshots.validate();
  return truncated_svd(snapshots.data, k);
}

std::size_t select_rank_energy(const Vec& all_sigma, double tau) {
  require(all_sigma.size() >= 1, "select_rank_energy: empty spectrum");
  require(tau > 0.0 && tau <= 1.0, "select_rank_energy: tau must lie in (0, 1]");
  const double total = all_sigma.squaredNorm();
  require(total > 0.0, "select_rank_energy: zero spectrum");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < all_sigma.size(); ++i) {
    acc += all_sigma(i) * all_sigma(i);
    if (acc / total >= tau) return static_cast<std::size_t>(i + 1);
  }
  return static_cast<std::size_t>(all_sigma.size());
}

Mat PSDBasis::A() const {
  const Eigen::Index n = Phi.rows();
  const Eigen::Index k = Phi.cols();
  Mat a = Mat::Zero(2 * n, 2 * k);
  a.topLeftCorner(n, k) = Phi;
  a.bottomRightCorner(n, k) = Phi;
  return a;
}

Mat PSDBasis::A_plus() const { return symplectic_inverse(A()); }

PODBasis build_pod(const SnapshotMatrix& snapshots, std::size_t k) {
  require(snapshots.layout == SnapshotLayout::generic, "build_pod: snapshots must use the generic layout");
  TruncatedSVD svd = truncated_svd(snapshots, k);
  return PODBasis{std::move(svd.U), std::move(svd.all_sigma)};
}

PSDBasis build_psd_cotangent_lift(const SnapshotMatrix& snapshots, std::size_t k) {
  require(snapshots.layout == SnapshotLayout::phase_split,
          "build_psd_cotangent_lift: snapshots must use the phase_split layout");
  TruncatedSVD svd = truncated_svd(snapshots, k);
  return PSDBasis{std::move(svd.U), std::move(svd.all_sigma)};
}

double symplecticity_defect(const Mat& A) {
  require(A.rows() % 2 == 0 && A.cols() % 2 == 0, "symplecticity_defect: A must be 2n x 2k");
  const Mat Jn = canonical_j(static_cast<std::size_t>(A.rows() / 2));
  const Mat Jk = canonical_j(static_cast<std::size_t>(A.cols() / 2));
  return (A.transpose() * Jn * A - Jk).cwiseAbs().maxCoeff();
}

Mat symplectic_inverse(const Mat& A) {
  const double defect = symplecticity_defect(A);
  if (!(defect <= 1e-8)) {
    std::ostringstream os;
    os << "symplectic_inverse: matrix is not symplectic (defect " << defect << ")";
    throw PreconditionError(os.str());
  }
  const Mat Jn = canonical_j(static_cast<std::size_t>(A.rows() / 2));
  const Mat Jk = canonical_j(static_cast<std::size_t>(A.cols() / 2));
  return Jk.transpose() * A.transpose() * Jn;
}

SDESystem reduce_sde_pod(const SDESystem& sys, const PODBasis& basis) {
  sys.validate();
  require(basis.n() == sys.dim, "reduce_sde_pod: basis rows must equal the system dimension");
  auto U = std::make_shared<const Mat>(basis.U);
  const auto n = static_cast<Eigen::Index>(sys.dim);
  SDESystem out;
  out.dim = basis.k();
  out.m = sys.m;
  auto drift = sys.drift;
  out.drift = [U, drift, n](const VecIn& xi, VecOut o) {
    const Vec u = *U * xi;
    Vec a(n);
    drift(u, a);
    o.noalias() = U->transpose() * a;
  };
  auto diffusion = sys.diffusion;
  out.diffusion = [U, diffusion, n](const VecIn& xi, std::size_t nu, VecOut o) {
    const Vec u = *U * xi;
    Vec b(n);
    diffusion(u, nu, b);
    o.noalias() = U->transpose() * b;
  };
  if (sys.noise) {
    auto noise = sys.noise;
    out.noise = [U, noise, n](const VecIn& xi, const VecIn& dW, VecOut o) {
      const Vec u = *U * xi;
      Vec b(n);
      noise(u, dW, b);
      o.noalias() = U->transpose() * b;
    };
  }
  return out;
}

Vec restrict_pod(const PODBasis& basis, const VecIn& u) {
  require(static_cast<std::size_t>(u.size()) == basis.n(), "restrict_pod: dimension mismatch");
  return basis.U.transpose() * u;
}

Vec lift_pod(const PODBasis& basis, const VecIn& xi) {
  require(static_cast<std::size_t>(xi.size()) == basis.k(), "lift_pod: dimension mismatch");
  return basis.U * xi;
}

namespace {

void lift_into(const Mat& Phi, const VecIn& xi, Vec& u) {
  const Eigen::Index k = Phi.cols();
  const Eigen::Index n = Phi.rows();
  u.resize(2 * n);
  u.head(n).noalias() = Phi * xi.head(k);
  u.tail(n).noalias() = Phi * xi.tail(k);
}

void project_into(const Mat& Phi, const Vec& g, VecOut o) {
  const Eigen::Index k = Phi.cols();
  const Eigen::Index n = Phi.rows();
  o.head(k).noalias() = Phi.transpose() * g.head(n);
  o.tail(k).noalias() = Phi.transpose() * g.tail(n);
}

}  // namespace

HamiltonianSDESystem reduce_hamiltonian_psd(const HamiltonianSDESystem& sys, const PSDBasis& basis) {
  sys.validate();
  require(basis.n_dof() == sys.n_dof, "reduce_hamiltonian_psd: basis rows must equal n_dof");
  auto Phi = std::make_shared<const Mat>(basis.Phi);
  const auto n = static_cast<Eigen::Index>(sys.n_dof);
  HamiltonianSDESystem out;
  out.n_dof = basis.k();
  out.m = sys.m;
  out.separable = sys.separable;

  auto H = sys.H;
  out.H = [Phi, H](const VecIn& xi) {
    Vec u;
    lift_into(*Phi, xi, u);
    return H(u);
  };
  auto grad_H = sys.grad_H;
  out.grad_H = [Phi, grad_H, n](const VecIn& xi, VecOut o) {
    Vec u;
    lift_into(*Phi, xi, u);
    Vec g(2 * n);
    grad_H(u, g);
    project_into(*Phi, g, o);
  };
  auto h = sys.h;
  out.h = [Phi, h](const VecIn& xi, std::size_t nu) {
    Vec u;
    lift_into(*Phi, xi, u);
    return h(u, nu);
  };
  auto grad_h = sys.grad_h;
  out.grad_h = [Phi, grad_h, n](const VecIn& xi, std::size_t nu, VecOut o) {
    Vec u;
    lift_into(*Phi, xi, u);
    Vec g(2 * n);
    grad_h(u, nu, g);
    project_into(*Phi, g, o);
  };
  if (sys.grad_h_combined) {
    auto combined = sys.grad_h_combined;
    out.grad_h_combined = [Phi, combined, n](const VecIn& xi, const VecIn& dW, VecOut o) {
      Vec u;
      lift_into(*Phi, xi, u);
      Vec g(2 * n);
      combined(u, dW, g);
      project_into(*Phi, g, o);
    };
  }
  if (sys.forcing) {
    Forcing f;
    if (sys.forcing->F) {
      auto F = sys.forcing->F;
      f.F = [Phi, F, n](const VecIn& xi, VecOut o) {
        Vec u;
        lift_into(*Phi, xi, u);
        Vec v(n);
        F(u, v);
        o.noalias() = Phi->transpose() * v;
      };
    }
    if (sys.forcing->f) {
      auto fn = sys.forcing->f;
      f.f = [Phi, fn, n](const VecIn& xi, std::size_t nu, VecOut o) {
        Vec u;
        lift_into(*Phi, xi, u);
        Vec v(n);
        fn(u, nu, v);
        o.noalias() = Phi->transpose() * v;
      };
    }
    out.forcing = std::move(f);
  }
  return out;
}

HamiltonianSDESystem reduce_forced_hamiltonian(const HamiltonianSDESystem& sys, const PSDBasis& basis) {
  require(sys.forcing.has_value(), "reduce_forced_hamiltonian: system has no forcing terms");
  return reduce_hamiltonian_psd(sys, basis);
}

Vec restrict_psd(const PSDBasis& basis, const VecIn& u) {
  require(static_cast<std::size_t>(u.size()) == 2 * basis.n_dof(), "restrict_psd: dimension mismatch");
  // For the cotangent lift A^+ = blockdiag(Phi^T, Phi^T).
  const auto n = static_cast<Eigen::Index>(basis.n_dof());
  const auto k = static_cast<Eigen::Index>(basis.k());
  Vec xi(2 * k);
  xi.head(k).noalias() = basis.Phi.transpose() * u.head(n);
  xi.tail(k).noalias() = basis.Phi.transpose() * u.tail(n);
  return xi;
}

Vec lift_psd(const PSDBasis& basis, const VecIn& xi) {
  require(static_cast<std::size_t>(xi.size()) == 2 * basis.k(), "lift_psd: dimension mismatch");
  Vec u;
  lift_into(basis.Phi, xi, u);
  return u;
}

RowMat lift_states(const RowMat& reduced, const std::function<Vec(const VecIn&)>& lift) {
  require(reduced.rows() >= 1, "lift_states: empty trajectory");
  const Vec first = lift(reduced.row(0).transpose());
  RowMat out(reduced.rows(), first.size());
  out.row(0) = first.transpose();
  for (Eigen::Index i = 1; i < reduced.rows(); ++i) out.row(i) = lift(reduced.row(i).transpose()).transpose();
  return out;
}

}  // namespace stochrom
