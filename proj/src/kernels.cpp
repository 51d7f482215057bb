#include "cecr/kernels.hpp"

namespace cecr::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void matvec_scalar(const double* w, const double* x, double* out,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = dot_scalar(w + r * cols, x, cols);
}

void ger_scalar(double alpha, const double* g, const double* x, double* w,
                std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    axpy_scalar(alpha * g[r], x, w + r * cols, cols);
}

}  // namespace detail

namespace {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend best_backend() {
  if (avx2_supported()) return Backend::avx2;
  return Backend::scalar;
}

Backend g_backend = best_backend();

}  // namespace

Backend active_backend() { return g_backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported()) b = Backend::scalar;
  if (b == Backend::neon) b = Backend::scalar;  // no NEON build on this target
  g_backend = b;
}

#if defined(__x86_64__) || defined(_M_X64)
#define CECR_DISPATCH(fn, ...)                            \
  do {                                                    \
    if (g_backend == Backend::avx2)                       \
      return detail::fn##_avx2(__VA_ARGS__);              \
    return detail::fn##_scalar(__VA_ARGS__);              \
  } while (0)
#else
#define CECR_DISPATCH(fn, ...) return detail::fn##_scalar(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, std::size_t n) {
  CECR_DISPATCH(dot, a, b, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  CECR_DISPATCH(axpy, alpha, x, y, n);
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  CECR_DISPATCH(add, a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  CECR_DISPATCH(mul, a, b, out, n);
}
void scale(double alpha, double* x, std::size_t n) {
  CECR_DISPATCH(scale, alpha, x, n);
}
void matvec(const double* w, const double* x, double* out, std::size_t rows,
            std::size_t cols) {
  CECR_DISPATCH(matvec, w, x, out, rows, cols);
}
void ger(double alpha, const double* g, const double* x, double* w,
         std::size_t rows, std::size_t cols) {
  CECR_DISPATCH(ger, alpha, g, x, w, rows, cols);
}

#undef CECR_DISPATCH

}  // namespace cecr::kernels
