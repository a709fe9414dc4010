#include <cstdlib>
#include <string_view>

#include "stochrom/kernels.hpp"

namespace stochrom::kernels {

#ifndef STOCHROM_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

namespace {
const KernelTable& select() {
  const char* env = std::getenv("STOCHROM_SIMD");
  const std::string_view request = env ? env : "";
  if (request == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}
}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace stochrom::kernels
