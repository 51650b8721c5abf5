#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "unlbench/errors.hpp"
#include "unlbench/hash.hpp"
#include "unlbench/matrix.hpp"
#include "unlbench/rng.hpp"

using namespace unlbench;

TEST_SUITE("core_numerics") {

TEST_CASE("gram_linear small cases") {
  const Matrix k = gram_linear(Matrix::from_rows({{1}, {0}}));
  CHECK(k == Matrix::from_rows({{1, 0}, {0, 0}}));

  const Matrix rows = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(gram_linear(rows) == Matrix::identity(3));

  CHECK_THROWS_AS(gram_linear(Matrix(1, 3)), DegenerateInputError);
}

TEST_CASE("gram_linear matches dot-product oracle and is symmetric") {
  SeededRng rng(42, 1);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = oracle::random_matrix(3 + t, 2 + t % 4, rng);
    const Matrix k = gram_linear(x);
    const auto ref = oracle::gram(x);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.rows(); ++j) {
        CHECK(std::abs(k(i, j) - ref[i][j]) <= 1e-12);
        CHECK(std::abs(k(i, j) - k(j, i)) <= 1e-12);
      }
  }
}

TEST_CASE("center_gram") {
  const Matrix ones(4, 4, 1.0);
  CHECK(max_abs_diff(center_gram(ones), Matrix(4, 4)) <= 1e-15);

  SeededRng rng(5, 2);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const Matrix k = gram_linear(x);
  const Matrix c = center_gram(k);
  CHECK(max_abs_diff(center_gram(c), c) <= 1e-12);

  // Explicit H K H triple product.
  Matrix h = Matrix::identity(5);
  for (auto& v : h.values()) v -= 1.0 / 5.0;
  const Matrix hkh = matmul(matmul(h, k), h);
  CHECK(max_abs_diff(c, hkh) <= 1e-12);

  for (std::size_t i = 0; i < 5; ++i) {
    double rs = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      rs += c(i, j);
      cs += c(j, i);
    }
    CHECK(std::abs(rs) <= 1e-9);
    CHECK(std::abs(cs) <= 1e-9);
  }
}

TEST_CASE("hsic against double-sum oracle") {
  SeededRng rng(6, 3);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = oracle::random_matrix(6, 4, rng);
    const Matrix b = oracle::random_matrix(6, 2, rng);
    const Matrix ka = gram_linear(a), kb = gram_linear(b);
    const double h = hsic(ka, kb);
    CHECK(std::abs(h - oracle::hsic_double_sum(oracle::gram(a), oracle::gram(b))) <= 1e-10);
    CHECK(std::abs(h - hsic(kb, ka)) <= 1e-12);
    CHECK(hsic(ka, ka) > 0.0);
  }
  const Matrix k = gram_linear(oracle::random_matrix(6, 3, rng));
  CHECK(hsic(k, Matrix(6, 6)) == 0.0);
  CHECK_THROWS_AS(hsic(k, Matrix(5, 5)), ShapeError);
}

TEST_CASE("cholesky and SPD inverse") {
  const Matrix a = Matrix::from_rows({{4, 2, 0.4}, {2, 5, 1}, {0.4, 1, 3}});
  Matrix l;
  REQUIRE(cholesky(a, l));
  CHECK(max_abs_diff(matmul_nt(l, l), a) <= 1e-12);
  const Matrix inv = spd_inverse_from_cholesky(l);
  CHECK(max_abs_diff(matmul(a, inv), Matrix::identity(3)) <= 1e-12);

  Matrix bad_l;
  CHECK_FALSE(cholesky(Matrix::from_rows({{1, 2}, {2, 1}}), bad_l));
}

TEST_CASE("matrix products agree with each other") {
  SeededRng rng(8, 0);
  const Matrix a = oracle::random_matrix(4, 3, rng);
  const Matrix b = oracle::random_matrix(4, 5, rng);
  CHECK(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)) <= 1e-12);
  const Matrix c = oracle::random_matrix(6, 3, rng);
  CHECK(max_abs_diff(matmul_nt(a, c), matmul(a, transpose(c))) <= 1e-12);
  CHECK_THROWS_AS(matmul(a, c), ShapeError);
}

TEST_CASE("SeededRng reproducibility and streams") {
  SeededRng a(123, 9), b(123, 9), c(123, 10);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);

  SeededRng u(1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.uniform_index(7) < 7);
  }

  SeededRng n(2, 2);
  double sum = 0.0, sq = 0.0;
  const int count = 20000;
  for (int i = 0; i < count; ++i) {
    const double v = n.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / count) < 0.05);
  CHECK(std::abs(sq / count - 1.0) < 0.05);

  const SeededRng parent(5, 5);
  SeededRng d1 = parent.derive(3), d2 = parent.derive(3), d3 = parent.derive(4);
  CHECK(d1.next_u64() == d2.next_u64());
  CHECK(d1.next_u64() != d3.next_u64());
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  SeededRng r1(9, 0), r2(9, 0);
  r1.shuffle(std::span<int>(v));
  r2.shuffle(std::span<int>(w));
  CHECK(v == w);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
}

TEST_CASE("UBM1 round trip and corruption") {
  SeededRng rng(10, 0);
  const Matrix m = oracle::random_matrix(3, 4, rng);
  const auto bytes = encode_ubm1(m);
  CHECK(bytes.size() == 12 + 3 * 4 * 8);
  CHECK(bytes[0] == 'U');
  CHECK(decode_ubm1(bytes) == m);
  CHECK(encode_ubm1(decode_ubm1(bytes)) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_ubm1(bad), IoError);
  auto short_bytes = bytes;
  short_bytes.pop_back();
  CHECK_THROWS_AS(decode_ubm1(short_bytes), IoError);
}

TEST_CASE("derive_seed is order sensitive") {
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

}  // TEST_SUITE
