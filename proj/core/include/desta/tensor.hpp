#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace desta {

// Dense row-major matrix of doubles. All adapter and trainer math runs in
// double precision so the finite-difference gradient checks stay meaningful.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// c = a[m,k] * b[k,n]
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a[m,k] * b[n,k]^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// c = a[k,m]^T * b[k,n]
Matrix matmul_tn(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& dst, const Matrix& src);
// column sums, accumulated into dst[cols]
void add_col_sums(std::vector<double>& dst, const Matrix& m);
// adds bias[cols] to every row
void add_row_bias(Matrix& m, const std::vector<double>& bias);

bool all_finite(const Matrix& m);

// FNV-1a, used to derive per-key RNG streams.
uint64_t fnv1a64(std::string_view s);
uint64_t mix64(uint64_t a, uint64_t b);

// Deterministic RNG used everywhere randomness matters: splitmix64 core,
// 53-bit mantissa uniforms, Box-Muller normals. Self-contained so sampling
// and initialization reproduce bit-for-bit across standard libraries.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  // modulo draw; bias is negligible for the small n used here
  size_t next_index(size_t n) { return size_t(next_u64() % n); }

  double next_normal();

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace desta
