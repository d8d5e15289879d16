#pragma once

// Entrywise kernels behind the proximal operators. Each has a scalar
// reference implementation and, on x86-64, an AVX2 variant; the variant is
// picked once at runtime from CPUID and can be overridden for testing.

#include <span>
#include <string_view>

namespace rbdg::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
/// Best supported ISA, unless overridden by `set_isa` or RBDG_ISA=scalar|avx2.
Isa active_isa() noexcept;
/// Throws InvalidArgument when the ISA is not supported on this machine.
void set_isa(Isa isa);

// `weights` may be empty, meaning all ones. All spans have equal length.

/// out = sign(v) * max(|v| - t*w, 0)
void soft_threshold(std::span<const double> v, double t, std::span<const double> weights,
                    std::span<double> out);

/// out = argmin_s a*w|s| + b|s - anchor| + (s - v)^2 / 2
void double_l1_prox(std::span<const double> v, double a, std::span<const double> weights, double b,
                    std::span<const double> anchor, std::span<double> out);

/// out = 1 / (|x| + eps)
void inverse_abs(std::span<const double> x, double eps, std::span<double> out);

struct KernelTable {
  void (*soft_threshold)(const double* v, double t, const double* w, double* out, std::size_t n);
  void (*double_l1_prox)(const double* v, double a, const double* w, double b, const double* anchor,
                         double* out, std::size_t n);
  void (*inverse_abs)(const double* x, double eps, double* out, std::size_t n);
};

const KernelTable& table(Isa isa);

namespace scalar {
extern const KernelTable kTable;
}
#if defined(RBDG_HAVE_AVX2)
namespace avx2 {
extern const KernelTable kTable;
}
#endif

}  // namespace rbdg::kernels
