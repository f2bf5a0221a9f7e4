#include "desta/tensor.hpp"

#include <cmath>

#include "desta/error.hpp"

namespace desta {

namespace {
void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(std::string("matrix shape mismatch in ") + what);
}
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul");
  Matrix c(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "matmul_nt");
  Matrix c(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (size_t k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      cr[j] = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "matmul_tn");
  Matrix c(a.cols, b.cols);
  for (size_t k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (size_t i = 0; i < a.cols; ++i) {
      double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.row(i);
      for (size_t j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

void add_inplace(Matrix& dst, const Matrix& src) {
  require(dst.same_shape(src), "add_inplace");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void add_col_sums(std::vector<double>& dst, const Matrix& m) {
  require(dst.size() == m.cols, "add_col_sums");
  for (size_t r = 0; r < m.rows; ++r) {
    const double* mr = m.row(r);
    for (size_t c = 0; c < m.cols; ++c) dst[c] += mr[c];
  }
}

void add_row_bias(Matrix& m, const std::vector<double>& bias) {
  require(bias.size() == m.cols, "add_row_bias");
  for (size_t r = 0; r < m.rows; ++r) {
    double* mr = m.row(r);
    for (size_t c = 0; c < m.cols; ++c) mr[c] += bias[c];
  }
}

bool all_finite(const Matrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double DetRng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = next_uniform();
  } while (u1 <= 0.0);
  double u2 = next_uniform();
  double mag = std::sqrt(-2.0 * std::log(u1));
  double two_pi_u2 = 2.0 * M_PI * u2;
  spare_ = mag * std::sin(two_pi_u2);
  have_spare_ = true;
  return mag * std::cos(two_pi_u2);
}

}  // namespace desta
