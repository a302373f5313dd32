#include <atomic>
#include <cstdlib>
#include <string>

#include "pne/errors.hpp"
#include "pne/simd.hpp"

namespace pne::simd {

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "?";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(PNE_WITH_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels(Isa isa) {
  if (!cpu_supports(isa)) throw ParameterError("SIMD kernel set '" + std::string(to_string(isa)) + "' unavailable");
#if defined(PNE_WITH_AVX2)
  if (isa == Isa::Avx2) return avx2::table();
#endif
  return scalar::table();
}

bool deterministic_mode() {
  const char* env = std::getenv("PNE_DETERMINISTIC");
  return env != nullptr && std::string(env) == "1";
}

namespace {

const KernelTable* select_initial() {
  if (const char* forced = std::getenv("PNE_SIMD")) {
    const std::string name(forced);
    if (name == "scalar") return &kernels(Isa::Scalar);
    if (name == "avx2") return &kernels(Isa::Avx2);
    throw ParameterError("PNE_SIMD must be 'scalar' or 'avx2', got '" + name + "'");
  }
  if (deterministic_mode()) return &kernels(Isa::Scalar);
  if (cpu_supports(Isa::Avx2)) return &kernels(Isa::Avx2);
  return &kernels(Isa::Scalar);
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_initial()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&kernels(isa), std::memory_order_release); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace pne::simd
