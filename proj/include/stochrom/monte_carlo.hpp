#pragma once

// Many independent sample paths as one large system: M copies of a base
// system, copy nu driven by its own block of Wiener increments. Block-wise
// reduced evaluations, ensemble reductions and error metrics.

#include <vector>

#include "stochrom/integrators.hpp"
#include "stochrom/reduction.hpp"

namespace stochrom {

// State (X_1, ..., X_M) with X_nu of base dimension N; noise columns
// nu*m_base .. (nu+1)*m_base-1 act on block nu only.
SDESystem stack_sde(const SDESystem& base, std::size_t M);

// q = (Q_1, ..., Q_M), p = (P_1, ..., P_M); H = sum_nu Hbar(Q_nu, P_nu),
// h for noise column nu*m_base + j is hbar_j(Q_nu, P_nu).
HamiltonianSDESystem stack_hamiltonian(const HamiltonianSDESystem& base, std::size_t M);

// Copy nu of a stacked state.
Vec stacked_block(const VecIn& u, std::size_t base_dim, std::size_t M, std::size_t nu);
Vec stacked_hamiltonian_block(const VecIn& u, std::size_t base_dof, std::size_t M, std::size_t nu);
// Increment columns of copy nu.
WienerPath path_block(const WienerPath& path, std::size_t m_base, std::size_t nu);

// Row blocks of a basis, each block_rows x k.
struct BlockBasis {
  std::vector<Mat> blocks;

  std::size_t M() const { return blocks.size(); }
  std::size_t k() const { return blocks.empty() ? 0 : static_cast<std::size_t>(blocks.front().cols()); }
  Mat assemble() const;
  static BlockBasis split(const Mat& basis, std::size_t block_rows);
};

// Reduced SDE of stack_sde(base, M) under U = [U^(1); ...; U^(M)]:
// drift sum_nu U^(nu)^T Gamma(U^(nu) xi); the lifted N*M state is never formed.
SDESystem block_reduced_sde(const SDESystem& base, const BlockBasis& U);
// Reduced system of stack_hamiltonian(base, M) under Phi = [Phi^(1); ...].
HamiltonianSDESystem block_reduced_hamiltonian(const HamiltonianSDESystem& base, const BlockBasis& Phi);

// Sum with a fixed pairwise tree (leaves of at most 16 terms).
double pairwise_sum(const double* x, std::size_t n, std::size_t stride = 1);

// Mean over paths; every entry is (time nodes) x dim.
RowMat ensemble_mean(const std::vector<RowMat>& paths);

struct ErrorTraces {
  Vec E1, E2, E3;  // NaN marks a value undefined at that node
};

// E1 on `path_index`, E2 relative mean-square, E3 relative error of the mean.
// A denominator below 1e-30 yields NaN.
ErrorTraces error_metrics(const std::vector<RowMat>& reconstructed, const std::vector<RowMat>& reference,
                          std::size_t path_index = 0);

}  // namespace stochrom
