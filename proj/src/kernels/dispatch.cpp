#include <atomic>
#include <cstdlib>
#include <string_view>

#include "rbdg/error.hpp"
#include "rbdg/kernels.hpp"

namespace rbdg::kernels {

namespace {

Isa detect() noexcept {
  if (const char* env = std::getenv("RBDG_ISA")) {
    const std::string_view want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

void check_sizes(std::size_t n, std::span<const double> other) {
  if (!other.empty() && other.size() != n) throw InvalidArgument("kernel operands differ in length");
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) noexcept {
  if (isa == Isa::scalar) return true;
#if defined(RBDG_HAVE_AVX2)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) throw InvalidArgument("ISA not supported on this CPU");
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
#if defined(RBDG_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2::kTable;
#endif
  (void)isa;
  return scalar::kTable;
}

void soft_threshold(std::span<const double> v, double t, std::span<const double> weights,
                    std::span<double> out) {
  check_sizes(v.size(), weights);
  check_sizes(v.size(), out);
  table(active_isa()).soft_threshold(v.data(), t, weights.empty() ? nullptr : weights.data(),
                                     out.data(), v.size());
}

void double_l1_prox(std::span<const double> v, double a, std::span<const double> weights, double b,
                    std::span<const double> anchor, std::span<double> out) {
  check_sizes(v.size(), weights);
  check_sizes(v.size(), out);
  if (anchor.size() != v.size()) throw InvalidArgument("kernel operands differ in length");
  table(active_isa()).double_l1_prox(v.data(), a, weights.empty() ? nullptr : weights.data(), b,
                                     anchor.data(), out.data(), v.size());
}

void inverse_abs(std::span<const double> x, double eps, std::span<double> out) {
  check_sizes(x.size(), out);
  table(active_isa()).inverse_abs(x.data(), eps, out.data(), x.size());
}

}  // namespace rbdg::kernels
