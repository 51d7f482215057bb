#pragma once

#include <cstddef>

// Dense double-precision kernels used by the tensor core. Every kernel has a
// scalar reference implementation; on x86 an AVX2+FMA variant is selected at
// runtime when the CPU supports it. The two variants are equivalence-tested.

namespace cecr::kernels {

enum class Backend { scalar, avx2, neon };

// Active backend for the process. Defaults to the best supported one.
Backend active_backend();
const char* backend_name(Backend b);

// Force a backend (used by tests and the CLI flag). Requesting an
// unsupported backend falls back to scalar.
void set_backend(Backend b);

// y[i] dot x[i]
double dot(const double* a, const double* b, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out = a + b
void add(const double* a, const double* b, double* out, std::size_t n);
// out = a * b elementwise
void mul(const double* a, const double* b, double* out, std::size_t n);
// x *= alpha
void scale(double alpha, double* x, std::size_t n);
// out[r] = dot(W row r, x); W is rows x cols, row-major
void matvec(const double* w, const double* x, double* out, std::size_t rows,
            std::size_t cols);
// W += alpha * g outer x  (rank-1 accumulate, g length rows, x length cols)
void ger(double alpha, const double* g, const double* x, double* w,
         std::size_t rows, std::size_t cols);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void add_scalar(const double* a, const double* b, double* out, std::size_t n);
void mul_scalar(const double* a, const double* b, double* out, std::size_t n);
void scale_scalar(double alpha, double* x, std::size_t n);
void matvec_scalar(const double* w, const double* x, double* out,
                   std::size_t rows, std::size_t cols);
void ger_scalar(double alpha, const double* g, const double* x, double* w,
                std::size_t rows, std::size_t cols);

#if defined(__x86_64__) || defined(_M_X64)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void add_avx2(const double* a, const double* b, double* out, std::size_t n);
void mul_avx2(const double* a, const double* b, double* out, std::size_t n);
void scale_avx2(double alpha, double* x, std::size_t n);
void matvec_avx2(const double* w, const double* x, double* out,
                 std::size_t rows, std::size_t cols);
void ger_avx2(double alpha, const double* g, const double* x, double* w,
              std::size_t rows, std::size_t cols);
#endif
}  // namespace detail

}  // namespace cecr::kernels
