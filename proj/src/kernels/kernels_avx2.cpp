#include <immintrin.h>

#include <cmath>
#include <limits>

#include "stochrom/kernels.hpp"

namespace stochrom::kernels {
namespace detail {
void nls_node_ref(std::size_t j, std::size_t jm, std::size_t jp, const double* q,
                  const double* p, double inv_dx2, double eps, double* gq, double* gp);
}

namespace {

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double max_abs_diff_avx2(std::size_t n, const double* x, const double* y) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d vmax = _mm256_setzero_pd();
  __m256d vnan = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d =
        _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    vnan = _mm256_or_pd(vnan, _mm256_cmp_pd(d, d, _CMP_UNORD_Q));
    vmax = _mm256_max_pd(vmax, d);
  }
  alignas(32) double lanes[4];
  alignas(32) double nans[4];
  _mm256_store_pd(lanes, vmax);
  _mm256_store_pd(nans, vnan);
  double m = 0.0;
  bool nan = false;
  for (int l = 0; l < 4; ++l) {
    if (nans[l] != 0.0) nan = true;
    if (lanes[l] > m) m = lanes[l];
  }
  for (; i < n; ++i) {
    const double d = std::fabs(x[i] - y[i]);
    if (std::isnan(d)) nan = true;
    else if (d > m) m = d;
  }
  return nan ? std::numeric_limits<double>::quiet_NaN() : m;
}

void nls_gradient_avx2(std::size_t n, const double* q, const double* p, double inv_dx2,
                       double eps, double* gq, double* gp) {
  detail::nls_node_ref(0, n - 1, 1, q, p, inv_dx2, eps, gq, gp);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d vinv = _mm256_set1_pd(inv_dx2);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t j = 1;
  for (; j + 4 < n; j += 4) {
    const __m256d qc = _mm256_loadu_pd(q + j);
    const __m256d pc = _mm256_loadu_pd(p + j);
    const __m256d r = _mm256_add_pd(_mm256_mul_pd(qc, qc), _mm256_mul_pd(pc, pc));
    const __m256d er = _mm256_mul_pd(veps, r);
    const __m256d lq = _mm256_add_pd(
        _mm256_sub_pd(_mm256_loadu_pd(q + j + 1), _mm256_mul_pd(two, qc)), _mm256_loadu_pd(q + j - 1));
    const __m256d lp = _mm256_add_pd(
        _mm256_sub_pd(_mm256_loadu_pd(p + j + 1), _mm256_mul_pd(two, pc)), _mm256_loadu_pd(p + j - 1));
    const __m256d sq = _mm256_add_pd(_mm256_mul_pd(lq, vinv), _mm256_mul_pd(er, qc));
    const __m256d sp = _mm256_add_pd(_mm256_mul_pd(lp, vinv), _mm256_mul_pd(er, pc));
    _mm256_storeu_pd(gq + j, _mm256_xor_pd(sq, sign));
    _mm256_storeu_pd(gp + j, _mm256_xor_pd(sp, sign));
  }
  for (; j + 1 < n; ++j) detail::nls_node_ref(j, j - 1, j + 1, q, p, inv_dx2, eps, gq, gp);
  detail::nls_node_ref(n - 1, n - 2, 0, q, p, inv_dx2, eps, gq, gp);
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, &axpy_avx2, &max_abs_diff_avx2, &nls_gradient_avx2};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace stochrom::kernels
