#pragma once

#include <cstddef>

namespace metboost::kernels::detail {

struct Table {
  double (*sum)(const double*, std::size_t);
  double (*sum_sq)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sse_about)(const double*, std::size_t, double);
  double (*mse)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

const Table& scalar_table();
const Table* avx2_table();  // nullptr when the CPU lacks AVX2

}  // namespace metboost::kernels::detail
