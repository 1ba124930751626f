#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "skl/matrix.hpp"
#include "skl/rng.hpp"

using namespace skl;

namespace {

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian();
  return m;
}

// Dense f64 reference, same operand order as the f32 kernels.
std::vector<double> ref_matmul(const Matrix& a, const Matrix& b) {
  std::vector<double> out(static_cast<std::size_t>(a.rows()) * b.cols(), 0.0);
  for (int p = 0; p < a.rows(); ++p)
    for (int q = 0; q < a.cols(); ++q)
      for (int s = 0; s < b.cols(); ++s)
        out[static_cast<std::size_t>(p) * b.cols() + s] +=
            static_cast<double>(a(p, q)) * b(q, s);
  return out;
}

// Relative to the cancellation-free magnitude Σ|a||b| of each dot product,
// so elements whose terms nearly cancel don't demand impossible precision.
void check_close(const Matrix& got, const std::vector<double>& want,
                 const std::vector<double>& scale, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double g = got.data()[i];
    const double w = want[i];
    CHECK(std::fabs(g - w) <= tol * std::max(scale[i], 1.0));
  }
}

std::vector<double> abs_scale(const Matrix& a, const Matrix& b) {
  std::vector<double> out(static_cast<std::size_t>(a.rows()) * b.cols(), 0.0);
  for (int p = 0; p < a.rows(); ++p)
    for (int q = 0; q < a.cols(); ++q)
      for (int s = 0; s < b.cols(); ++s)
        out[static_cast<std::size_t>(p) * b.cols() + s] +=
            std::fabs(static_cast<double>(a(p, q)) * b(q, s));
  return out;
}

}  // namespace

TEST_CASE("matmul hand examples") {
  CHECK(matmul({{1, 2}}, {{1, -1}, {2, 0}}) == Matrix{{5, -1}});
  CHECK(matmul({{1, 0}, {0, 1}}, {{3, 4}, {5, 6}}) == Matrix{{3, 4}, {5, 6}});
  CHECK(matmul({{0, 0}}, {{1, 2, 3}, {4, 5, 6}}) == Matrix{{0, 0, 0}});
}

TEST_CASE("matmul_at hand examples") {
  CHECK(matmul_at({{1}, {2}}, {{1, -1}, {1, -1}}) == Matrix{{3, -3}});
  CHECK(matmul_at({{1, 0}, {0, 1}}, {{7, 8}, {9, 10}}) ==
        Matrix{{7, 8}, {9, 10}});
  CHECK(matmul_at({{0}, {0}}, {{1, 2}, {3, 4}}) == Matrix{{0, 0}});
}

TEST_CASE("matmul_bt hand examples") {
  CHECK(matmul_bt({{1, -1}}, {{1, -1}, {2, 0}}) == Matrix{{2, 2}});
  CHECK(matmul_bt({{1, 2}, {3, 4}}, {{1, 0}, {0, 1}}) ==
        Matrix{{1, 2}, {3, 4}});
  CHECK(matmul_bt({{0, 0}}, {{5, 6}, {7, 8}}) == Matrix{{0, 0}});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ContractError);
  CHECK_THROWS_AS(matmul_at(Matrix(2, 3), Matrix(3, 2)), ContractError);
  CHECK_THROWS_AS(matmul_bt(Matrix(2, 3), Matrix(2, 4)), ContractError);
}

TEST_CASE("col_sum") {
  CHECK(col_sum({{1, 2}, {3, 4}}) == std::vector<float>{4, 6});
  CHECK(col_sum({{5, 6}}) == std::vector<float>{5, 6});
  CHECK(col_sum(Matrix(3, 2)) == std::vector<float>{0, 0});
}

TEST_CASE("add_inplace") {
  Matrix d{{1}};
  add_inplace(d, {{2}});
  CHECK(d == Matrix{{3}});
  Matrix e{{1, 2}};
  const Matrix before = e;
  add_inplace(e, Matrix(1, 2));
  CHECK(e == before);
  add_inplace(e, {{-1, -2}});
  CHECK(e == Matrix{{0, 0}});
  CHECK_THROWS_AS(add_inplace(e, Matrix(2, 2)), ContractError);
}

TEST_CASE("scaled_sub_inplace") {
  Matrix d{{1}};
  scaled_sub_inplace(d, {{2}}, 0.1f);
  CHECK(d(0, 0) == doctest::Approx(0.8).epsilon(1e-6));
  Matrix e{{3, 4}};
  const Matrix before = e;
  scaled_sub_inplace(e, {{9, 9}}, 0.0f);
  CHECK(e == before);
  scaled_sub_inplace(e, Matrix(1, 2), 5.0f);
  CHECK(e == before);
  CHECK_THROWS_AS(scaled_sub_inplace(e, {{1, 2}},
                                     std::numeric_limits<float>::infinity()),
                  ContractError);
  std::vector<float> v{1, 1};
  scaled_sub_inplace(v, {1, -1}, 1.0f);
  CHECK(v == std::vector<float>{0, 2});
}

TEST_CASE("kernels match a float64 reference on seeded random shapes") {
  Rng rng(42);
  const int shapes[][3] = {{1, 1, 1}, {3, 5, 2}, {7, 1, 9},
                           {16, 16, 16}, {64, 64, 64}};
  for (const auto& sh : shapes) {
    const int p = sh[0], q = sh[1], s = sh[2];
    const Matrix a = random_matrix(p, q, rng);
    const Matrix b = random_matrix(q, s, rng);
    const auto want = ref_matmul(a, b);
    const auto scale = abs_scale(a, b);
    check_close(matmul(a, b), want, scale, 1e-5);
    check_close(matmul_at(transpose(a), b), want, scale, 1e-5);
    check_close(matmul_bt(a, transpose(b)), want, scale, 1e-5);
  }
}

TEST_CASE("transposed kernels are bitwise equal to matmul of the transpose") {
  Rng rng(7);
  const Matrix a = random_matrix(9, 13, rng);
  const Matrix b = random_matrix(9, 5, rng);
  CHECK(matmul_at(a, b) == matmul(transpose(a), b));
  const Matrix c = random_matrix(4, 13, rng);
  const Matrix d = random_matrix(6, 13, rng);
  CHECK(matmul_bt(c, d) == matmul(c, transpose(d)));
}

TEST_CASE("repeated runs are bit-identical") {
  Rng rng(11);
  const Matrix a = random_matrix(17, 23, rng);
  const Matrix b = random_matrix(23, 8, rng);
  CHECK(matmul(a, b) == matmul(a, b));
}

TEST_CASE("MacCounter tallies exactly P*Q*S per matmul") {
  MacCounter mc;
  matmul(Matrix(3, 4), Matrix(4, 5), &mc, "a");
  CHECK(mc.labeled("a") == 3 * 4 * 5);
  matmul_at(Matrix(4, 3), Matrix(4, 5), &mc, "b");
  CHECK(mc.labeled("b") == 3 * 4 * 5);
  matmul_bt(Matrix(3, 4), Matrix(5, 4), &mc, "c");
  CHECK(mc.labeled("c") == 3 * 4 * 5);
  matmul(Matrix(3, 4), Matrix(4, 5), &mc, "a");
  CHECK(mc.labeled("a") == 2 * 3 * 4 * 5);
  CHECK(mc.total() == 4 * 3 * 4 * 5);
  mc.reset();
  CHECK(mc.total() == 0);
}

TEST_CASE("scaled_sub_inplace counts one MAC per element") {
  MacCounter mc;
  Matrix d(4, 6);
  scaled_sub_inplace(d, Matrix(4, 6), 0.1f, &mc, "update");
  CHECK(mc.labeled("update") == 24);
  std::vector<float> v(7, 0.0f);
  scaled_sub_inplace(v, std::vector<float>(7, 0.0f), 0.1f, &mc, "update");
  CHECK(mc.labeled("update") == 31);
}
