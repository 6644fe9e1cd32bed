#include <doctest.h>

#include <cmath>
#include <vector>

#include "strand/kernels.hpp"
#include "strand/rng.hpp"

using namespace strand;
namespace k = strand::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

const std::vector<std::size_t> kSizes = {0, 1, 3, 5, 8, 31, 64, 257, 1000};

struct BackendGuard {
  k::Backend saved;
  BackendGuard() : saved(k::active_backend()) {}
  ~BackendGuard() { k::set_backend(saved); }
};

}  // namespace

TEST_CASE("scalar reference matches a naive loop") {
  BackendGuard guard;
  k::set_backend(k::Backend::scalar);
  Rng rng(11);
  auto x = random_vec(257, rng);
  auto y = random_vec(257, rng);
  double expect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) expect += x[i] * y[i];
  CHECK(k::dot(x.data(), y.data(), x.size()) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("simd backends are equivalent to the scalar reference") {
  BackendGuard guard;
  for (k::Backend b : {k::Backend::avx2, k::Backend::neon}) {
    if (!k::backend_available(b)) continue;
    CAPTURE(k::backend_name(b));
    Rng rng(42);
    for (std::size_t n : kSizes) {
      auto x = random_vec(n, rng);
      auto y = random_vec(n, rng);

      k::set_backend(k::Backend::scalar);
      double dot_ref = k::dot(x.data(), y.data(), n);
      double sum_ref = k::sum(x.data(), n);
      std::vector<double> add_ref(n), mul_ref(n), sub_ref(n);
      if (n) {
        k::add(x.data(), y.data(), add_ref.data(), n);
        k::sub(x.data(), y.data(), sub_ref.data(), n);
        k::mul(x.data(), y.data(), mul_ref.data(), n);
      }
      std::vector<double> axpy_ref = y;
      k::axpy(1.7, x.data(), axpy_ref.data(), n);
      std::vector<double> scale_ref = x;
      k::scale(-0.3, scale_ref.data(), n);
      double max_ref = n ? k::max_value(x.data(), n) : 0.0;

      k::set_backend(b);
      CHECK(k::dot(x.data(), y.data(), n) == doctest::Approx(dot_ref).epsilon(1e-12));
      CHECK(k::sum(x.data(), n) == doctest::Approx(sum_ref).epsilon(1e-12));
      if (n) CHECK(k::max_value(x.data(), n) == max_ref);  // order-insensitive, exact
      std::vector<double> out(n);
      if (n) {
        k::add(x.data(), y.data(), out.data(), n);
        CHECK(out == add_ref);  // elementwise ops are bit-exact
        k::sub(x.data(), y.data(), out.data(), n);
        CHECK(out == sub_ref);
        k::mul(x.data(), y.data(), out.data(), n);
        CHECK(out == mul_ref);
      }
      std::vector<double> ay = y;
      k::axpy(1.7, x.data(), ay.data(), n);
      for (std::size_t i = 0; i < n; ++i)
        CHECK(ay[i] == doctest::Approx(axpy_ref[i]).epsilon(1e-13));
      std::vector<double> sx = x;
      k::scale(-0.3, sx.data(), n);
      CHECK(sx == scale_ref);
    }
  }
}

TEST_CASE("matmul layouts agree with a triple-loop oracle") {
  Rng rng(7);
  std::size_t m = 5, kk = 7, n = 4;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  std::vector<double> expect(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < kk; ++l)
      for (std::size_t j = 0; j < n; ++j) expect[i * n + j] += a[i * kk + l] * b[l * n + j];

  std::vector<double> out(m * n);
  k::matmul(a.data(), b.data(), out.data(), m, kk, n);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // a * b^T with b stored as [n, k]
  std::vector<double> bt(n * kk);
  for (std::size_t l = 0; l < kk; ++l)
    for (std::size_t j = 0; j < n; ++j) bt[j * kk + l] = b[l * n + j];
  k::matmul_nt(a.data(), bt.data(), out.data(), m, kk, n);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // a^T stored as [k, m]
  std::vector<double> at(kk * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < kk; ++l) at[l * m + i] = a[i * kk + l];
  k::matmul_tn(at.data(), b.data(), out.data(), m, kk, n);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("backend dispatch reports a usable active backend") {
  CHECK(k::backend_available(k::active_backend()));
  CHECK(k::backend_available(k::Backend::scalar));
}
