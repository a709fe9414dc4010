#include "stochrom/deim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace stochrom {

namespace {

Eigen::Index argmax_abs(const Vec& v) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::fabs(v(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  return best;
}

Mat select_rows(const Mat& m, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

std::vector<std::size_t> deim_select_indices(const Mat& Psi) {
  const Eigen::Index n = Psi.rows();
  const Eigen::Index kbar = Psi.cols();
  require(kbar >= 1 && kbar <= n, "deim_select_indices: need 1 <= kbar <= n");
  require(Psi.allFinite(), "deim_select_indices: entries must be finite");
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(kbar));
  const Vec c0 = Psi.col(0);
  const Eigen::Index first = argmax_abs(c0);
  if (c0(first) == 0.0) throw NumericalError("deim_select_indices: column 0 is zero");
  idx.push_back(static_cast<std::size_t>(first));
  for (Eigen::Index l = 1; l < kbar; ++l) {
    const Mat M = select_rows(Psi.leftCols(l), idx);
    Vec rhs(l);
    for (Eigen::Index i = 0; i < l; ++i) rhs(i) = Psi(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]), l);
    Eigen::FullPivLU<Mat> lu(M);
    if (lu.rank() < l) {
      std::ostringstream os;
      os << "deim_select_indices: interpolation system singular at column " << l;
      throw NumericalError(os.str());
    }
    const Vec c = lu.solve(rhs);
    const Vec r = Psi.col(l) - Psi.leftCols(l) * c;
    const Eigen::Index best = argmax_abs(r);
    if (r(best) == 0.0 || std::find(idx.begin(), idx.end(), static_cast<std::size_t>(best)) != idx.end()) {
      std::ostringstream os;
      os << "deim_select_indices: column " << l << " lies in the span of the previous columns";
      throw NumericalError(os.str());
    }
    idx.push_back(static_cast<std::size_t>(best));
  }
  return idx;
}

Vec DeimOperator::g(const VecIn& xi) const {
  require(xi.size() == projector.cols(), "deim: reduced state dimension mismatch");
  Vec u;
  if (lift_rows.empty()) {
    u = projector * xi;
  } else {
    u = Vec::Zero(projector.rows());
    const Vec part = projector_rows * xi;
    for (std::size_t t = 0; t < lift_rows.size(); ++t) u(static_cast<Eigen::Index>(lift_rows[t])) = part(static_cast<Eigen::Index>(t));
  }
  Vec out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) out(static_cast<Eigen::Index>(j)) = component(u, indices[j]);
  return out;
}

Vec DeimOperator::apply(const VecIn& xi) const {
  Vec out = L_bar * xi;
  out.noalias() += W * g(xi);
  return out;
}

Vec DeimOperator::approximate(const VecIn& aN) const {
  require(aN.size() == Psi.rows(), "deim: nonlinear vector dimension mismatch");
  Vec sel(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) sel(static_cast<Eigen::Index>(j)) = aN(static_cast<Eigen::Index>(indices[j]));
  return interp * sel;
}

DeimOperator build_deim(const SnapshotMatrix& nonlinear_snapshots, std::size_t k_bar, const Mat& projector,
                        const LinearSplit& split) {
  nonlinear_snapshots.validate();
  require(nonlinear_snapshots.layout == SnapshotLayout::generic, "build_deim: nonlinear snapshots must be generic");
  require(projector.rows() == static_cast<Eigen::Index>(nonlinear_snapshots.rows()),
          "build_deim: projector rows must equal the nonlinear term dimension");
  require(split.L.rows() == projector.rows() && split.L.cols() == projector.rows(),
          "build_deim: split matrix must be n x n");
  require(static_cast<bool>(split.nonlinear_component), "build_deim: split needs a component evaluator");

  TruncatedSVD svd = truncated_svd(nonlinear_snapshots, k_bar);
  return deim_from_basis(std::move(svd.U), std::move(svd.all_sigma), projector, split);
}

DeimOperator deim_from_basis(Mat Psi, Vec sigma_record, const Mat& projector, const LinearSplit& split) {
  require(Psi.rows() == projector.rows() && Psi.cols() >= 1, "deim_from_basis: Psi must be n x kbar with kbar >= 1");
  require(split.L.rows() == projector.rows() && split.L.cols() == projector.rows(),
          "deim_from_basis: split matrix must be n x n");
  require(static_cast<bool>(split.nonlinear_component), "deim_from_basis: split needs a component evaluator");
  DeimOperator op;
  op.Psi = std::move(Psi);
  op.sigma_record = std::move(sigma_record);
  op.indices = deim_select_indices(op.Psi);

  const Mat PtPsi = select_rows(op.Psi, op.indices);
  Eigen::JacobiSVD<Mat> s(PtPsi);
  const Vec sv = s.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || !std::isfinite(smin)) throw NumericalError("build_deim: P^T Psi is singular");
  op.C = 1.0 / smin;
  op.condition = sv(0) / smin;
  const Mat inv = PtPsi.fullPivLu().inverse();
  op.interp = op.Psi * inv;
  op.W = projector.transpose() * op.interp;
  op.L_bar = projector.transpose() * (split.L * projector);
  op.projector = projector;
  op.component = split.nonlinear_component;

  if (split.component_dependencies) {
    std::set<std::size_t> rows;
    for (std::size_t i : op.indices) {
      for (std::size_t r : split.component_dependencies(i)) {
        require(r < static_cast<std::size_t>(projector.rows()), "build_deim: dependency index out of range");
        rows.insert(r);
      }
    }
    op.lift_rows.assign(rows.begin(), rows.end());
    op.projector_rows = select_rows(projector, op.lift_rows);
  }
  return op;
}

SDESystem reduce_sde_pod_deim(const SDESystem& sys, const PODBasis& basis, const DeimOperator& drift_op,
                              const std::vector<std::optional<DeimOperator>>& diffusion_ops) {
  sys.validate();
  require(basis.n() == sys.dim, "reduce_sde_pod_deim: basis rows must equal the system dimension");
  require(drift_op.projector.rows() == static_cast<Eigen::Index>(sys.dim) &&
              drift_op.projector.cols() == static_cast<Eigen::Index>(basis.k()),
          "reduce_sde_pod_deim: drift operator built against a different projector");
  require(diffusion_ops.empty() || diffusion_ops.size() == sys.m,
          "reduce_sde_pod_deim: need one diffusion operator slot per noise term or none");

  SDESystem out = reduce_sde_pod(sys, basis);
  auto dop = std::make_shared<const DeimOperator>(drift_op);
  out.drift = [dop](const VecIn& xi, VecOut o) { o = dop->apply(xi); };

  if (!sys.diffusion_splits.empty()) {
    struct Term {
      Mat L_bar;
      std::shared_ptr<const DeimOperator> op;
    };
    auto terms = std::make_shared<std::vector<Term>>();
    for (std::size_t nu = 0; nu < sys.m; ++nu) {
      const LinearSplit& s = sys.diffusion_splits[nu];
      Term t;
      t.L_bar = basis.U.transpose() * (s.L * basis.U);
      if (s.has_nonlinear()) {
        require(!diffusion_ops.empty() && diffusion_ops[nu].has_value(),
                "reduce_sde_pod_deim: nonlinear diffusion term needs a DEIM operator");
        t.op = std::make_shared<const DeimOperator>(*diffusion_ops[nu]);
      }
      terms->push_back(std::move(t));
    }
    out.diffusion = [terms](const VecIn& xi, std::size_t nu, VecOut o) {
      const Term& t = (*terms)[nu];
      o.noalias() = t.L_bar * xi;
      if (t.op) o.noalias() += t.op->W * t.op->g(xi);
    };
    out.noise = nullptr;
  }
  return out;
}

HamiltonianSDESystem reduce_hamiltonian_psd_sdeim(const HamiltonianSDESystem& sys, const PSDBasis& basis,
                                                  const DeimOperator& drift_op,
                                                  const std::vector<std::optional<DeimOperator>>& diffusion_ops) {
  HamiltonianSDESystem out = reduce_hamiltonian_psd(sys, basis);
  require(drift_op.projector.rows() == static_cast<Eigen::Index>(2 * sys.n_dof) &&
              drift_op.projector.cols() == static_cast<Eigen::Index>(2 * basis.k()),
          "reduce_hamiltonian_psd_sdeim: drift operator built against a different projector");
  require(diffusion_ops.empty() || diffusion_ops.size() == sys.m,
          "reduce_hamiltonian_psd_sdeim: need one diffusion operator slot per noise term or none");
  auto dop = std::make_shared<const DeimOperator>(drift_op);
  out.grad_H = [dop](const VecIn& xi, VecOut o) { o = dop->apply(xi); };
  out.separable = false;

  if (!sys.h_splits.empty()) {
    const Mat A = basis.A();
    struct Term {
      Mat L_bar;
      std::shared_ptr<const DeimOperator> op;
    };
    auto terms = std::make_shared<std::vector<Term>>();
    for (std::size_t nu = 0; nu < sys.m; ++nu) {
      const LinearSplit& s = sys.h_splits[nu];
      Term t;
      t.L_bar = A.transpose() * (s.L * A);
      if (s.has_nonlinear()) {
        require(!diffusion_ops.empty() && diffusion_ops[nu].has_value(),
                "reduce_hamiltonian_psd_sdeim: nonlinear h gradient needs a DEIM operator");
        t.op = std::make_shared<const DeimOperator>(*diffusion_ops[nu]);
      }
      terms->push_back(std::move(t));
    }
    out.grad_h = [terms](const VecIn& xi, std::size_t nu, VecOut o) {
      const Term& t = (*terms)[nu];
      o.noalias() = t.L_bar * xi;
      if (t.op) o.noalias() += t.op->W * t.op->g(xi);
    };
    out.grad_h_combined = nullptr;
  }
  return out;
}

DeTerms theorem_de_terms(const HamiltonianSDESystem& sys, const PSDBasis& basis, const DeimOperator& drift_op,
                         const std::vector<std::optional<DeimOperator>>& diffusion_ops, const VecIn& xi) {
  require(sys.H_split.has_value() && sys.H_split->has_nonlinear(),
          "theorem_de_terms: system needs a gradient split with a nonlinear part");
  require(static_cast<std::size_t>(xi.size()) == 2 * basis.k(), "theorem_de_terms: reduced state dimension mismatch");
  require(diffusion_ops.empty() || diffusion_ops.size() == sys.m,
          "theorem_de_terms: need one diffusion operator slot per noise term or none");
  const auto n = static_cast<Eigen::Index>(sys.n_dof);
  const Vec u = lift_psd(basis, xi);
  const Vec gH = restrict_psd(basis, sys.grad_H_at(u));  // grad of H(A xi)
  const double gnorm = gH.norm();
  constexpr double eps = std::numeric_limits<double>::epsilon();

  auto term = [&](const DeimOperator& op, const Vec& aN, double& value, double& bound) {
    const Vec diff = op.approximate(aN) - aN;
    value = gH.dot(apply_j(restrict_psd(basis, diff)));
    const Vec resid = aN - op.Psi * (op.Psi.transpose() * aN);
    bound = op.C * gnorm * resid.norm();
    const double margin = 64.0 * eps * op.C * gnorm * aN.norm();
    return std::fabs(value) <= bound + margin;
  };

  DeTerms out;
  Vec aN(2 * n);
  sys.H_split->nonlinear(u, aN);
  out.bounds_hold = term(drift_op, aN, out.gamma, out.gamma_bound);

  out.lambda = Vec::Zero(static_cast<Eigen::Index>(sys.m));
  out.lambda_bound = Vec::Zero(static_cast<Eigen::Index>(sys.m));
  out.bracket = Vec::Zero(static_cast<Eigen::Index>(sys.m));
  const auto k = static_cast<Eigen::Index>(basis.k());
  for (std::size_t nu = 0; nu < sys.m; ++nu) {
    const auto i = static_cast<Eigen::Index>(nu);
    const Vec gh = restrict_psd(basis, sys.grad_h_at(u, nu));
    out.bracket(i) = gH.head(k).dot(gh.tail(k)) - gH.tail(k).dot(gh.head(k));
    if (std::fabs(out.bracket(i)) > 1e-8 * (1.0 + gnorm * gh.norm())) out.bracket_ok = false;
    if (sys.h_splits.empty() || !sys.h_splits[nu].has_nonlinear()) continue;
    if (diffusion_ops.empty() || !diffusion_ops[nu]) continue;
    Vec aNnu(2 * n);
    sys.h_splits[nu].nonlinear(u, aNnu);
    double value = 0.0, bound = 0.0;
    if (!term(*diffusion_ops[nu], aNnu, value, bound)) out.bounds_hold = false;
    out.lambda(i) = value;
    out.lambda_bound(i) = bound;
  }
  return out;
}

}  // namespace stochrom
