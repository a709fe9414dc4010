#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace stochrom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SpMat = Eigen::SparseMatrix<double>;

using VecIn = Eigen::Ref<const Vec>;
using VecOut = Eigen::Ref<Vec>;
using MatIn = Eigen::Ref<const Mat>;

// Raised when an input violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a numerical procedure cannot produce a usable result
// (singular interpolation system, non-symplectic basis, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

// Canonical symplectic matrix J_{2n} = [[0, I], [-I, 0]].
Mat canonical_j(std::size_t n);

// out = J_{2n} v without forming J.
inline void apply_j(const VecIn& v, VecOut out) {
  const Eigen::Index n = v.size() / 2;
  out.head(n) = v.tail(n);
  out.tail(n) = -v.head(n);
}

inline Vec apply_j(const VecIn& v) {
  Vec out(v.size());
  apply_j(v, out);
  return out;
}

}  // namespace stochrom
