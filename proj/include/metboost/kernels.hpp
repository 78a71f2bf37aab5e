#pragma once

#include <cstddef>
#include <span>

// Vector arithmetic kernels used by the hot loops (node statistics, residual
// updates, error curves). Every kernel has a scalar reference implementation
// and an AVX2 variant; the backend is picked once at runtime from CPUID and
// can be overridden with force(). Backends are equivalence-tested against the
// scalar reference.

namespace metboost::kernels {

enum class Backend { scalar, avx2 };

Backend active();
bool supported(Backend b);
void force(Backend b);  // throws std::runtime_error if unsupported on this CPU
const char* backend_name(Backend b);

double sum(const double* x, std::size_t n);
double sum_sq(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sse_about(const double* x, std::size_t n, double center);
double mse(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);  // y += a*x

inline double sum(std::span<const double> x) { return sum(x.data(), x.size()); }
inline double sum_sq(std::span<const double> x) { return sum_sq(x.data(), x.size()); }
inline double sse_about(std::span<const double> x, double c) {
  return sse_about(x.data(), x.size(), c);
}
inline double mse(std::span<const double> a, std::span<const double> b) {
  return mse(a.data(), b.data(), a.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  axpy(a, x.data(), y.data(), x.size());
}

}  // namespace metboost::kernels
