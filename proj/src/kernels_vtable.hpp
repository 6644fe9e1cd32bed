#pragma once

#include <cstddef>

namespace strand::kernels {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
};

// Per-architecture tables; null when the ISA is absent.
const Vtable* avx2_vtable();
const Vtable* neon_vtable();

}  // namespace strand::kernels
