#include <algorithm>
#include <cmath>

#include "rbdg/kernels.hpp"

namespace rbdg::kernels::scalar {

namespace {

void soft_threshold(const double* v, double t, const double* w, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double thr = w ? t * w[i] : t;
    out[i] = std::copysign(std::max(std::abs(v[i]) - thr, 0.0), v[i]);
  }
}

// Breakpoints at 0 and c. For c >= 0 the stationary candidates on the three
// linear pieces are t1 (s < 0), t2 (0 < s < c), t3 (s > c); clamping them in
// order gives the minimizer. c < 0 is the mirror image.
void double_l1_prox(const double* v, double a, const double* w, double b, const double* anchor,
                    double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = w ? a * w[i] : a;
    const double c = anchor[i];
    const double up = v[i] + ai;
    const double dn = v[i] - ai;
    const double t1 = up + b;
    const double t2 = dn + b;
    const double t3 = dn - b;
    const double t4 = up - b;
    if (c >= 0.0) {
      out[i] = std::min(t1, std::max(0.0, std::min(t2, std::max(c, t3))));
    } else {
      out[i] = std::max(t3, std::min(0.0, std::max(t4, std::min(c, t1))));
    }
  }
}

void inverse_abs(const double* x, double eps, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (std::abs(x[i]) + eps);
}

}  // namespace

const KernelTable kTable{&soft_threshold, &double_l1_prox, &inverse_abs};

}  // namespace rbdg::kernels::scalar
