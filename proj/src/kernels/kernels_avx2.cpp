#include <immintrin.h>

#include <cstddef>

#include "rbdg/kernels.hpp"

namespace rbdg::kernels::avx2 {

namespace {

constexpr std::size_t kLanes = 4;

inline __m256d abs_pd(__m256d x, __m256d sign_mask) { return _mm256_andnot_pd(sign_mask, x); }

// Element order of min/max arguments mirrors the scalar reference.
inline __m256d min_pd(__m256d a, __m256d b) { return _mm256_min_pd(b, a); }
inline __m256d max_pd(__m256d a, __m256d b) { return _mm256_max_pd(b, a); }

void soft_threshold(const double* v, double t, const double* w, double* out, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d tv = _mm256_set1_pd(t);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d x = _mm256_loadu_pd(v + i);
    const __m256d thr = w ? _mm256_mul_pd(tv, _mm256_loadu_pd(w + i)) : tv;
    const __m256d mag = max_pd(_mm256_sub_pd(abs_pd(x, sign_mask), thr), zero);
    _mm256_storeu_pd(out + i, _mm256_or_pd(mag, _mm256_and_pd(x, sign_mask)));
  }
  if (i < n) scalar::kTable.soft_threshold(v + i, t, w ? w + i : nullptr, out + i, n - i);
}

void double_l1_prox(const double* v, double a, const double* w, double b, const double* anchor,
                    double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d x = _mm256_loadu_pd(v + i);
    const __m256d c = _mm256_loadu_pd(anchor + i);
    const __m256d ai = w ? _mm256_mul_pd(av, _mm256_loadu_pd(w + i)) : av;
    const __m256d up = _mm256_add_pd(x, ai);
    const __m256d dn = _mm256_sub_pd(x, ai);
    const __m256d t1 = _mm256_add_pd(up, bv);
    const __m256d t2 = _mm256_add_pd(dn, bv);
    const __m256d t3 = _mm256_sub_pd(dn, bv);
    const __m256d t4 = _mm256_sub_pd(up, bv);
    const __m256d pos = min_pd(t1, max_pd(zero, min_pd(t2, max_pd(c, t3))));
    const __m256d neg = max_pd(t3, min_pd(zero, max_pd(t4, min_pd(c, t1))));
    const __m256d c_nonneg = _mm256_cmp_pd(c, zero, _CMP_GE_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(neg, pos, c_nonneg));
  }
  if (i < n) {
    scalar::kTable.double_l1_prox(v + i, a, w ? w + i : nullptr, b, anchor + i, out + i, n - i);
  }
}

void inverse_abs(const double* x, double eps, double* out, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d ev = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d d = _mm256_add_pd(abs_pd(_mm256_loadu_pd(x + i), sign_mask), ev);
    _mm256_storeu_pd(out + i, _mm256_div_pd(one, d));
  }
  if (i < n) scalar::kTable.inverse_abs(x + i, eps, out + i, n - i);
}

}  // namespace

const KernelTable kTable{&soft_threshold, &double_l1_prox, &inverse_abs};

}  // namespace rbdg::kernels::avx2
