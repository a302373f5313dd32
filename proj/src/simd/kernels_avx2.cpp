// Compiled with -mavx2 only; callers must check cpu_supports(Isa::Avx2).
#include <immintrin.h>

#include "pne/simd.hpp"

namespace pne::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void gathered_sq_distances(const double* xyz, const std::uint32_t* idx, std::size_t n, const double* q,
                           double* out) {
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  const __m128i three = _mm_set1_epi32(3);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m128i base = _mm_mullo_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i)), three);
    const __m256d dx = _mm256_sub_pd(_mm256_i32gather_pd(xyz, base, 8), qx);
    const __m256d dy = _mm256_sub_pd(_mm256_i32gather_pd(xyz + 1, base, 8), qy);
    const __m256d dz = _mm256_sub_pd(_mm256_i32gather_pd(xyz + 2, base, 8), qz);
    const __m256d d2 = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                     _mm256_mul_pd(dz, dz));
    _mm256_storeu_pd(out + i, d2);
  }
  for (; i < n; ++i) {
    const double* p = xyz + 3 * static_cast<std::size_t>(idx[i]);
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    const double dz = p[2] - q[2];
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::Avx2, &dot, &axpy, &gathered_sq_distances};
  return t;
}

}  // namespace pne::simd::avx2
