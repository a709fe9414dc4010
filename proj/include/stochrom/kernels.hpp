#pragma once

// Data-parallel inner loops with a scalar reference implementation and
// optional SIMD variants. The variant is chosen once at runtime from the CPU
// features; every variant rounds exactly like the scalar one (element-wise
// operations in the same order, no fused multiply-add), so results are
// bitwise identical regardless of dispatch.

#include <cstddef>
#include <string_view>

namespace stochrom::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // max_i |x[i] - y[i]|
  double (*max_abs_diff)(std::size_t n, const double* x, const double* y);
  // Gradient of the periodic central-difference NLS Hamiltonian:
  //   gq[j] = -(q[j+1] - 2 q[j] + q[j-1]) * inv_dx2 - eps (q[j]^2 + p[j]^2) q[j]
  //   gp[j] = -(p[j+1] - 2 p[j] + p[j-1]) * inv_dx2 - eps (q[j]^2 + p[j]^2) p[j]
  // with periodic wrap. n >= 3.
  void (*nls_gradient)(std::size_t n, const double* q, const double* p, double inv_dx2,
                       double eps, double* gq, double* gp);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();

// Table in use. Honors STOCHROM_SIMD=scalar|avx2 in the environment, otherwise
// picks the widest supported variant.
const KernelTable& active();

std::string_view isa_name(Isa isa);

}  // namespace stochrom::kernels
