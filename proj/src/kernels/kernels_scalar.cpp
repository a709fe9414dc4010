#include "stochrom/kernels.hpp"

#include <cmath>
#include <limits>

namespace stochrom::kernels {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double max_abs_diff_scalar(std::size_t n, const double* x, const double* y) {
  double m = 0.0;
  bool nan = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::fabs(x[i] - y[i]);
    if (std::isnan(d)) nan = true;
    else if (d > m) m = d;
  }
  return nan ? std::numeric_limits<double>::quiet_NaN() : m;
}

inline void nls_node(std::size_t j, std::size_t jm, std::size_t jp, const double* q,
                     const double* p, double inv_dx2, double eps, double* gq, double* gp) {
  const double r = q[j] * q[j] + p[j] * p[j];
  const double er = eps * r;
  const double lq = (q[jp] - 2.0 * q[j]) + q[jm];
  const double lp = (p[jp] - 2.0 * p[j]) + p[jm];
  gq[j] = -((lq * inv_dx2) + (er * q[j]));
  gp[j] = -((lp * inv_dx2) + (er * p[j]));
}

void nls_gradient_scalar(std::size_t n, const double* q, const double* p, double inv_dx2,
                         double eps, double* gq, double* gp) {
  nls_node(0, n - 1, 1, q, p, inv_dx2, eps, gq, gp);
  for (std::size_t j = 1; j + 1 < n; ++j) nls_node(j, j - 1, j + 1, q, p, inv_dx2, eps, gq, gp);
  nls_node(n - 1, n - 2, 0, q, p, inv_dx2, eps, gq, gp);
}

}  // namespace

namespace detail {
// Shared with the SIMD variants for loop tails and boundary nodes.
void nls_node_ref(std::size_t j, std::size_t jm, std::size_t jp, const double* q,
                  const double* p, double inv_dx2, double eps, double* gq, double* gp) {
  nls_node(j, jm, jp, q, p, inv_dx2, eps, gq, gp);
}
}  // namespace detail

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, &axpy_scalar, &max_abs_diff_scalar,
                                 &nls_gradient_scalar};
  return table;
}

}  // namespace stochrom::kernels
