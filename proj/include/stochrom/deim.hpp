#pragma once

// Discrete empirical interpolation of nonlinear terms for projected systems:
// POD-DEIM reduced SDEs and PSD-SDEIM reduced Hamiltonian systems, plus the
// drift/diffusion energy-rate terms and their bounds.

#include <optional>
#include <vector>

#include "stochrom/reduction.hpp"

namespace stochrom {

// Greedy interpolation indices (0-based) in selection order.
std::vector<std::size_t> deim_select_indices(const Mat& Psi);

struct DeimOperator {
  Mat Psi;                           // n x kbar
  std::vector<std::size_t> indices;  // kbar rows of P
  Mat W;                             // projector^T Psi (P^T Psi)^-1
  Mat L_bar;                         // projector^T L projector
  Mat interp;                        // Psi (P^T Psi)^-1, full-space interpolant
  double C = 0.0;                    // |(P^T Psi)^-1|_2
  double condition = 0.0;            // cond_2(P^T Psi)
  Vec sigma_record;                  // spectrum of the nonlinear snapshots

  Mat projector;                     // U_k or A
  ComponentFn component;             // entry i of a_N(u)
  // Rows of the projector needed to evaluate the selected components; empty
  // means the whole state is lifted.
  std::vector<std::size_t> lift_rows;
  Mat projector_rows;

  std::size_t k_bar() const { return indices.size(); }
  std::size_t n() const { return static_cast<std::size_t>(Psi.rows()); }
  // g(xi) = P^T a_N(projector xi), touching only the selected components.
  Vec g(const VecIn& xi) const;
  // L_bar xi + W g(xi)
  Vec apply(const VecIn& xi) const;
  // Psi (P^T Psi)^-1 P^T a_N for a full a_N vector.
  Vec approximate(const VecIn& aN) const;
};

// Psi from the leading kbar left singular vectors of the nonlinear snapshots.
DeimOperator build_deim(const SnapshotMatrix& nonlinear_snapshots, std::size_t k_bar, const Mat& projector,
                        const LinearSplit& split);
// Same operator from a stored Psi (indices are reselected deterministically).
DeimOperator deim_from_basis(Mat Psi, Vec sigma_record, const Mat& projector, const LinearSplit& split);

// POD-DEIM: drift L_bar xi + W g(xi). Diffusion term nu uses its split when the
// system carries diffusion splits (DEIM operator diffusion_ops[nu] for a
// nonlinear part) and falls back to U^T b_nu(U xi) otherwise.
SDESystem reduce_sde_pod_deim(const SDESystem& sys, const PODBasis& basis, const DeimOperator& drift_op,
                              const std::vector<std::optional<DeimOperator>>& diffusion_ops = {});

// PSD-SDEIM: gradients L_bar xi + W g(xi) stand in for the projected
// gradients, so the drift is J_2k (L_bar xi + W g(xi)). H and h_nu stay the
// exact reduced Hamiltonians H(A xi), h_nu(A xi).
HamiltonianSDESystem reduce_hamiltonian_psd_sdeim(const HamiltonianSDESystem& sys, const PSDBasis& basis,
                                                  const DeimOperator& drift_op,
                                                  const std::vector<std::optional<DeimOperator>>& diffusion_ops =
                                                      {});

struct DeTerms {
  double gamma = 0.0;
  Vec lambda;
  double gamma_bound = 0.0;
  Vec lambda_bound;
  Vec bracket;        // {H~, h~_nu} at xi
  bool bracket_ok = true;
  bool bounds_hold = true;
};

// gamma = grad H~^T J_2k A^T (abar_N - a_N), lambda_nu likewise with the
// diffusion splits; bounds C |grad H~| |(I - Psi Psi^T) a_N|. The bound
// comparison allows a rounding margin of 64 eps C |grad H~| |a_N|.
DeTerms theorem_de_terms(const HamiltonianSDESystem& sys, const PSDBasis& basis, const DeimOperator& drift_op,
                         const std::vector<std::optional<DeimOperator>>& diffusion_ops, const VecIn& xi);

}  // namespace stochrom
