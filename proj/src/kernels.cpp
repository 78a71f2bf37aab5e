#include "metboost/kernels.hpp"

#include <stdexcept>

#include "kernels_detail.hpp"

namespace metboost::kernels {

namespace {

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sse_about_scalar(const double* x, std::size_t n, double c) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - c;
    s += d * d;
  }
  return s;
}

double mse_scalar(const double* a, const double* b, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(n);
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

const detail::Table* pick_default() {
  if (const detail::Table* t = detail::avx2_table()) return t;
  return &detail::scalar_table();
}

const detail::Table* g_active = nullptr;
Backend g_backend = Backend::scalar;

void init_once() {
  if (g_active) return;
  const detail::Table* t = pick_default();
  g_active = t;
  g_backend = (t == &detail::scalar_table()) ? Backend::scalar : Backend::avx2;
}

}  // namespace

namespace detail {
const Table& scalar_table() {
  static const Table t{sum_scalar,       sum_sq_scalar, dot_scalar,
                       sse_about_scalar, mse_scalar,    axpy_scalar};
  return t;
}
}  // namespace detail

Backend active() {
  init_once();
  return g_backend;
}

bool supported(Backend b) {
  return b == Backend::scalar || detail::avx2_table() != nullptr;
}

void force(Backend b) {
  if (!supported(b)) {
    throw std::runtime_error("kernel backend not supported on this CPU: " +
                             std::string(backend_name(b)));
  }
  g_active = (b == Backend::scalar) ? &detail::scalar_table() : detail::avx2_table();
  g_backend = b;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

double sum(const double* x, std::size_t n) {
  init_once();
  return g_active->sum(x, n);
}

double sum_sq(const double* x, std::size_t n) {
  init_once();
  return g_active->sum_sq(x, n);
}

double dot(const double* x, const double* y, std::size_t n) {
  init_once();
  return g_active->dot(x, y, n);
}

double sse_about(const double* x, std::size_t n, double c) {
  init_once();
  return g_active->sse_about(x, n, c);
}

double mse(const double* a, const double* b, std::size_t n) {
  init_once();
  return g_active->mse(a, b, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  init_once();
  g_active->axpy(a, x, y, n);
}

}  // namespace metboost::kernels
