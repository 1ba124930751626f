#include "skl/matrix.hpp"

#include <cmath>

namespace skl {

namespace {

[[noreturn]] void shape_error(const char* op, int ar, int ac, int br, int bc) {
  throw ContractError(std::string(op) + ": incompatible shapes " +
                      std::to_string(ar) + "x" + std::to_string(ac) + " and " +
                      std::to_string(br) + "x" + std::to_string(bc));
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1)
    throw ContractError("Matrix: dimensions must be >= 1, got " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<float>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  if (rows_ < 1 || cols_ < 1) throw ContractError("Matrix: empty initializer");
  data_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols_)
      throw ContractError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void MacCounter::add(std::string_view label, std::uint64_t macs) {
  auto it = tallies_.find(label);
  if (it == tallies_.end())
    tallies_.emplace(std::string(label), macs);
  else
    it->second += macs;
}

std::uint64_t MacCounter::total() const {
  std::uint64_t t = 0;
  for (const auto& [_, v] : tallies_) t += v;
  return t;
}

std::uint64_t MacCounter::labeled(std::string_view label) const {
  auto it = tallies_.find(label);
  return it == tallies_.end() ? 0 : it->second;
}

Matrix matmul(const Matrix& a, const Matrix& b, MacCounter* mc,
              std::string_view label) {
  if (a.cols() != b.rows())
    shape_error("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  const int p = a.rows(), q = a.cols(), s = b.cols();
  Matrix c(p, s);
  for (int i = 0; i < p; ++i) {
    float* crow = c.data() + static_cast<std::size_t>(i) * s;
    for (int k = 0; k < q; ++k) {
      const float aik = a(i, k);
      const float* brow = b.data() + static_cast<std::size_t>(k) * s;
      for (int j = 0; j < s; ++j) crow[j] += aik * brow[j];
    }
  }
  if (mc) mc->add(label, static_cast<std::uint64_t>(p) * q * s);
  return c;
}

Matrix matmul_at(const Matrix& a, const Matrix& b, MacCounter* mc,
                 std::string_view label) {
  if (a.rows() != b.rows())
    shape_error("matmul_at", a.rows(), a.cols(), b.rows(), b.cols());
  const int q = a.rows(), p = a.cols(), s = b.cols();
  Matrix c(p, s);
  for (int k = 0; k < q; ++k) {
    const float* arow = a.data() + static_cast<std::size_t>(k) * p;
    const float* brow = b.data() + static_cast<std::size_t>(k) * s;
    for (int i = 0; i < p; ++i) {
      float* crow = c.data() + static_cast<std::size_t>(i) * s;
      const float aki = arow[i];
      for (int j = 0; j < s; ++j) crow[j] += aki * brow[j];
    }
  }
  if (mc) mc->add(label, static_cast<std::uint64_t>(p) * q * s);
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b, MacCounter* mc,
                 std::string_view label) {
  if (a.cols() != b.cols())
    shape_error("matmul_bt", a.rows(), a.cols(), b.rows(), b.cols());
  const int p = a.rows(), q = a.cols(), s = b.rows();
  Matrix c(p, s);
  for (int i = 0; i < p; ++i) {
    const float* arow = a.data() + static_cast<std::size_t>(i) * q;
    for (int j = 0; j < s; ++j) {
      const float* brow = b.data() + static_cast<std::size_t>(j) * q;
      float acc = 0.0f;
      for (int k = 0; k < q; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  if (mc) mc->add(label, static_cast<std::uint64_t>(p) * q * s);
  return c;
}

std::vector<float> col_sum(const Matrix& a) {
  std::vector<float> out(a.cols(), 0.0f);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

void add_inplace(Matrix& dst, const Matrix& src) {
  if (!dst.same_shape(src))
    shape_error("add_inplace", dst.rows(), dst.cols(), src.rows(), src.cols());
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void scaled_sub_inplace(Matrix& dst, const Matrix& g, float eta, MacCounter* mc,
                        std::string_view label) {
  if (!dst.same_shape(g))
    shape_error("scaled_sub_inplace", dst.rows(), dst.cols(), g.rows(),
                g.cols());
  if (!std::isfinite(eta))
    throw ContractError("scaled_sub_inplace: eta is not finite");
  float* d = dst.data();
  const float* s = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] -= eta * s[i];
  if (mc) mc->add(label, dst.size());
}

void scaled_sub_inplace(std::vector<float>& dst, const std::vector<float>& g,
                        float eta, MacCounter* mc, std::string_view label) {
  if (dst.size() != g.size())
    throw ContractError("scaled_sub_inplace: vector length mismatch " +
                        std::to_string(dst.size()) + " vs " +
                        std::to_string(g.size()));
  if (!std::isfinite(eta))
    throw ContractError("scaled_sub_inplace: eta is not finite");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= eta * g[i];
  if (mc) mc->add(label, dst.size());
}

}  // namespace skl
