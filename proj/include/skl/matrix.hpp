#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skl {

// Violation of a numeric or shape contract. The CLI maps this to exit code 3.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// File/stream failure. The CLI maps this to exit code 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major float32 matrix. Plain value type, zero-initialized.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);
  Matrix(std::initializer_list<std::initializer_list<float>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  float& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  float operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool operator==(const Matrix& o) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

// Exact tally of scalar multiply-accumulate operations, keyed by labels
// such as "FC1.fwd" or "LoRA2.bwd". Single-writer; counts never decrease
// except through reset().
class MacCounter {
 public:
  void add(std::string_view label, std::uint64_t macs);
  void reset() { tallies_.clear(); }
  std::uint64_t total() const;
  std::uint64_t labeled(std::string_view label) const;
  const std::map<std::string, std::uint64_t, std::less<>>& tallies() const {
    return tallies_;
  }

 private:
  std::map<std::string, std::uint64_t, std::less<>> tallies_;
};

// c = a * b. Accumulation is float32, ascending over the inner index, so
// repeated runs with identical inputs are bit-identical.
Matrix matmul(const Matrix& a, const Matrix& b, MacCounter* mc = nullptr,
              std::string_view label = {});

// c = a^T * b (a is Q x P, b is Q x S).
Matrix matmul_at(const Matrix& a, const Matrix& b, MacCounter* mc = nullptr,
                 std::string_view label = {});

// c = a * b^T (a is P x Q, b is S x Q).
Matrix matmul_bt(const Matrix& a, const Matrix& b, MacCounter* mc = nullptr,
                 std::string_view label = {});

// out[m] = sum over rows of a[.][m].
std::vector<float> col_sum(const Matrix& a);

void add_inplace(Matrix& dst, const Matrix& src);

// dst -= eta * g. Counts one MAC per element when a counter is given.
void scaled_sub_inplace(Matrix& dst, const Matrix& g, float eta,
                        MacCounter* mc = nullptr, std::string_view label = {});
void scaled_sub_inplace(std::vector<float>& dst, const std::vector<float>& g,
                        float eta, MacCounter* mc = nullptr,
                        std::string_view label = {});

}  // namespace skl
