#include "zsd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace zsd::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double* x, double alpha, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) noexcept {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(a + r * cols, x, cols);
}

void matvec_t_acc(const double* a, const double* g, double* y,
                  std::size_t rows, std::size_t cols) noexcept {
  for (std::size_t r = 0; r < rows; ++r) axpy(g[r], a + r * cols, y, cols);
}

void ger_acc(double* a, double alpha, const double* g, const double* x,
             std::size_t rows, std::size_t cols) noexcept {
  for (std::size_t r = 0; r < rows; ++r) axpy(alpha * g[r], x, a + r * cols, cols);
}

}  // namespace scalar

bool avx2_supported() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

struct Backend {
  std::string_view name;
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
  void (*scale)(double*, double, std::size_t) noexcept;
  void (*matvec)(const double*, const double*, double*, std::size_t,
                 std::size_t) noexcept;
  void (*matvec_t_acc)(const double*, const double*, double*, std::size_t,
                       std::size_t) noexcept;
  void (*ger_acc)(double*, double, const double*, const double*, std::size_t,
                  std::size_t) noexcept;
};

constexpr Backend kScalarBackend{
    "scalar",       scalar::dot,          scalar::axpy, scalar::scale,
    scalar::matvec, scalar::matvec_t_acc, scalar::ger_acc};

#if ZSD_HAVE_AVX2_KERNELS
constexpr Backend kAvx2Backend{
    "avx2",       avx2::dot,          avx2::axpy, avx2::scale,
    avx2::matvec, avx2::matvec_t_acc, avx2::ger_acc};
#endif

Backend select_backend() noexcept {
  const char* forced = std::getenv("ZSD_KERNELS");
  if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
    return kScalarBackend;
  }
#if ZSD_HAVE_AVX2_KERNELS
  if (avx2_supported()) return kAvx2Backend;
#endif
  return kScalarBackend;
}

const Backend& backend() noexcept {
  static const Backend b = select_backend();
  return b;
}

}  // namespace

std::string_view active_backend() noexcept { return backend().name; }

double dot(const double* a, const double* b, std::size_t n) noexcept {
  return backend().dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  backend().axpy(alpha, x, y, n);
}

void scale(double* x, double alpha, std::size_t n) noexcept {
  backend().scale(x, alpha, n);
}

void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) noexcept {
  backend().matvec(a, x, y, rows, cols);
}

void matvec_t_acc(const double* a, const double* g, double* y,
                  std::size_t rows, std::size_t cols) noexcept {
  backend().matvec_t_acc(a, g, y, rows, cols);
}

void ger_acc(double* a, double alpha, const double* g, const double* x,
             std::size_t rows, std::size_t cols) noexcept {
  backend().ger_acc(a, alpha, g, x, rows, cols);
}

}  // namespace zsd::kernels
