#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by the loss, the toy detection head and
// the optimizer. The scalar namespace is the reference semantics; the AVX2
// variants are selected at runtime when the CPU supports them and must agree
// with the reference up to floating-point reassociation (covered by the
// kernel equivalence tests). Set ZSD_KERNELS=scalar in the environment to
// force the reference path.

namespace zsd::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept;

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;

// x *= alpha
void scale(double* x, double alpha, std::size_t n) noexcept;

// y = A x, A row-major (rows x cols)
void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) noexcept;

// y += A^T g, A row-major (rows x cols), g has `rows` entries
void matvec_t_acc(const double* a, const double* g, double* y,
                  std::size_t rows, std::size_t cols) noexcept;

// A += alpha * g x^T (rank-1 accumulate), A row-major (rows x cols)
void ger_acc(double* a, double alpha, const double* g, const double* x,
             std::size_t rows, std::size_t cols) noexcept;

}  // namespace scalar

#if ZSD_HAVE_AVX2_KERNELS
namespace avx2 {

double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double* x, double alpha, std::size_t n) noexcept;
void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) noexcept;
void matvec_t_acc(const double* a, const double* g, double* y,
                  std::size_t rows, std::size_t cols) noexcept;
void ger_acc(double* a, double alpha, const double* g, const double* x,
             std::size_t rows, std::size_t cols) noexcept;

}  // namespace avx2
#endif

// True when the running CPU can execute the AVX2 variants (independent of
// whether they were compiled in).
bool avx2_supported() noexcept;

// Name of the backend the dispatched entry points resolve to.
std::string_view active_backend() noexcept;

double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double* x, double alpha, std::size_t n) noexcept;
void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) noexcept;
void matvec_t_acc(const double* a, const double* g, double* y,
                  std::size_t rows, std::size_t cols) noexcept;
void ger_acc(double* a, double alpha, const double* g, const double* x,
             std::size_t rows, std::size_t cols) noexcept;

}  // namespace zsd::kernels
