#pragma once

#include <cstddef>
#include <string>

// Dense double-precision primitives behind the model core. Every operation has
// a scalar reference implementation plus SIMD variants (AVX2 on x86-64, NEON on
// aarch64) selected once at startup. The environment variable STRAND_KERNELS
// ("scalar", "avx2", "neon") overrides auto-detection; equivalence of the SIMD
// variants against the scalar reference is enforced by tests/test_kernels.cpp.
namespace strand::kernels {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Test hook. Throws if the backend is not available on this machine.
void set_backend(Backend b);

// Reductions.
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);  // n > 0

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
// Elementwise; out may alias a or b.
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
// x[i] *= a
void scale(double a, double* x, std::size_t n);

// Row-major matrix products built on the dispatched primitives.
// out is overwritten.
//
//   matmul   : out[m,n] = a[m,k] * b[k,n]
//   matmul_nt: out[m,n] = a[m,k] * b[n,k]^T
//   matmul_tn: out[m,n] = a[k,m]^T * b[k,n]
void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* out,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(const double* a, const double* b, double* out,
               std::size_t m, std::size_t k, std::size_t n);

}  // namespace strand::kernels
