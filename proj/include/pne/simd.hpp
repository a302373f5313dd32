#pragma once

// Data-parallel inner loops with a scalar reference implementation and an
// AVX2 variant. The variant is chosen once at startup from the CPU features
// and can be pinned through the environment:
//
//   PNE_SIMD=scalar|avx2   force a kernel set (error if unsupported)
//   PNE_DETERMINISTIC=1    pin the scalar set so results match across machines
//
// Every kernel set rounds element-wise operations identically (no fused
// multiply-add anywhere). Only reductions (dot) differ in association order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace pne::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = |xyz[idx[i]] - q|^2 with xyz packed as n_points x 3, evaluated
  // as (dx*dx + dy*dy) + dz*dz.
  void (*gathered_sq_distances)(const double* xyz, const std::uint32_t* idx, std::size_t n, const double* q,
                                double* out);
};

namespace scalar {
const KernelTable& table();
}
#if defined(PNE_WITH_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif

bool cpu_supports(Isa isa);

// Kernel set for an ISA; throws ParameterError when the CPU or build lacks it.
const KernelTable& kernels(Isa isa);

// Currently selected kernel set.
const KernelTable& active();
void set_active(Isa isa);

// True when PNE_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode();

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace pne::simd
