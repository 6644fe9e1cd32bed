#include "strand/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "kernels_vtable.hpp"

namespace strand::kernels {

namespace scalar_impl {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max_value(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace scalar_impl

#if !defined(__x86_64__) && !defined(_M_X64) && !defined(__aarch64__)
const Vtable* avx2_vtable() { return nullptr; }
const Vtable* neon_vtable() { return nullptr; }
#endif

namespace {

const Vtable kScalar = {
    scalar_impl::dot, scalar_impl::sum,  scalar_impl::max_value,
    scalar_impl::axpy, scalar_impl::add, scalar_impl::sub,
    scalar_impl::mul,  scalar_impl::scale,
};

const Vtable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &kScalar;
    case Backend::avx2: return avx2_vtable();
    case Backend::neon: return neon_vtable();
  }
  return nullptr;
}

Backend detect() {
  if (const char* env = std::getenv("STRAND_KERNELS")) {
    std::string name(env);
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
      if (name == backend_name(b)) {
        if (!backend_available(b))
          throw std::runtime_error("STRAND_KERNELS requests unavailable backend: " + name);
        return b;
      }
    }
    throw std::runtime_error("STRAND_KERNELS: unknown backend: " + name);
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend g_backend = detect();
const Vtable* g_vt = table_for(g_backend);

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_available(Backend b) { return table_for(b) != nullptr; }

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  const Vtable* vt = table_for(b);
  if (!vt) throw std::runtime_error(std::string("kernel backend unavailable: ") + backend_name(b));
  g_backend = b;
  g_vt = vt;
}

double dot(const double* x, const double* y, std::size_t n) { return g_vt->dot(x, y, n); }
double sum(const double* x, std::size_t n) { return g_vt->sum(x, n); }
double max_value(const double* x, std::size_t n) { return g_vt->max_value(x, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { g_vt->axpy(a, x, y, n); }
void add(const double* a, const double* b, double* out, std::size_t n) { g_vt->add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { g_vt->sub(a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { g_vt->mul(a, b, out, n); }
void scale(double a, double* x, std::size_t n) { g_vt->scale(a, x, n); }

void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n) {
  std::memset(out, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (std::size_t l = 0; l < k; ++l)
      if (arow[l] != 0.0) axpy(arow[l], b + l * n, orow, n);
  }
}

void matmul_nt(const double* a, const double* b, double* out,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = dot(arow, b + j * k, k);
  }
}

void matmul_tn(const double* a, const double* b, double* out,
               std::size_t m, std::size_t k, std::size_t n) {
  std::memset(out, 0, m * n * sizeof(double));
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = a + l * m;
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i)
      if (arow[i] != 0.0) axpy(arow[i], brow, out + i * n, n);
  }
}

}  // namespace strand::kernels
