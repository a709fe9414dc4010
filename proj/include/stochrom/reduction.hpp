#pragma once

// Snapshot assembly, truncated SVD, POD and cotangent-lift PSD bases, and the
// projected (reduced) systems built from them.

#include <vector>

#include "stochrom/integrators.hpp"
#include "stochrom/sde.hpp"

namespace stochrom {

enum class SnapshotLayout { generic, phase_split };

struct SnapshotMatrix {
  Mat data;
  SnapshotLayout layout = SnapshotLayout::generic;
  std::size_t n_dof = 0;  // phase_split only; data is n_dof x 2r, q-columns first

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
  void validate() const;
};

// States at steps 0, stride, 2 stride, ... as columns (dim x r).
Mat sample_states(const Trajectory& traj, std::size_t stride);

// Pools sampled state blocks (each dim x r_i) in input order. For phase_split
// every q-half comes before every p-half.
SnapshotMatrix make_snapshots(const std::vector<Mat>& sampled, SnapshotLayout layout);
SnapshotMatrix assemble_snapshots(const std::vector<Trajectory>& trajectories, std::size_t stride,
                                  SnapshotLayout layout);
// Columns f(x) for every column x of `states`.
Mat map_columns(const Mat& states, const FieldFn& f, std::size_t out_dim);

struct TruncatedSVD {
  Mat U;          // n x k
  Vec sigma;      // k, descending
  Mat V;          // r x k
  Vec all_sigma;  // min(n, r), descending

  std::size_t k() const { return static_cast<std::size_t>(sigma.size()); }
};

// Rank-k truncation. Each column of U is signed so that its largest-magnitude
// entry is positive (lowest index on ties); V follows.
TruncatedSVD truncated_svd(const Mat& data, std::size_t k);
TruncatedSVD truncated_svd(const SnapshotMatrix& snapshots, std::size_t k);

// Smallest k with sum_{i<=k} sigma_i^2 / sum sigma_i^2 >= tau.
std::size_t select_rank_energy(const Vec& all_sigma, double tau = 0.9999);

struct PODBasis {
  Mat U;
  Vec sigma_record;  // full spectrum of the snapshot matrix

  std::size_t n() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t k() const { return static_cast<std::size_t>(U.cols()); }
};

struct PSDBasis {
  Mat Phi;  // n_dof x k
  Vec sigma_record;

  std::size_t n_dof() const { return static_cast<std::size_t>(Phi.rows()); }
  std::size_t k() const { return static_cast<std::size_t>(Phi.cols()); }
  Mat A() const;       // blockdiag(Phi, Phi)
  Mat A_plus() const;  // J_2k^T A^T J_2n
};

PODBasis build_pod(const SnapshotMatrix& snapshots, std::size_t k);
PSDBasis build_psd_cotangent_lift(const SnapshotMatrix& snapshots, std::size_t k);

// max |A^T J_2n A - J_2k|.
double symplecticity_defect(const Mat& A);
// J_2k^T A^T J_2n; rejects A whose symplecticity defect exceeds 1e-8.
Mat symplectic_inverse(const Mat& A);

// xi -> U^T a(U xi), xi -> U^T b_nu(U xi).
SDESystem reduce_sde_pod(const SDESystem& sys, const PODBasis& basis);
Vec restrict_pod(const PODBasis& basis, const VecIn& u);
Vec lift_pod(const PODBasis& basis, const VecIn& xi);

// H~(eta, chi) = H(Phi eta, Phi chi), h~_nu likewise; gradients are the
// Phi^T projections. Forcing, when present, becomes Phi^T F(Phi eta, Phi chi).
HamiltonianSDESystem reduce_hamiltonian_psd(const HamiltonianSDESystem& sys, const PSDBasis& basis);
HamiltonianSDESystem reduce_forced_hamiltonian(const HamiltonianSDESystem& sys, const PSDBasis& basis);
Vec restrict_psd(const PSDBasis& basis, const VecIn& u);  // A^+ u
Vec lift_psd(const PSDBasis& basis, const VecIn& xi);     // A xi

// Applies a lift to every row of a reduced trajectory.
RowMat lift_states(const RowMat& reduced, const std::function<Vec(const VecIn&)>& lift);

}  // namespace stochrom
