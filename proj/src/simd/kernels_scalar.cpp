#include "pne/simd.hpp"

namespace pne::simd::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void gathered_sq_distances(const double* xyz, const std::uint32_t* idx, std::size_t n, const double* q,
                           double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = xyz + 3 * static_cast<std::size_t>(idx[i]);
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    const double dz = p[2] - q[2];
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::Scalar, &dot, &axpy, &gathered_sq_distances};
  return t;
}

}  // namespace pne::simd::scalar
