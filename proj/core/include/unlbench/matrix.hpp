#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace unlbench {

/// Dense row-major matrix of doubles. Vectors are stored as 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& a) noexcept;
bool is_symmetric(const Matrix& a, double tol) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices);
/// Stacks rows of `top` above rows of `bottom`.
Matrix vstack(const Matrix& top, const Matrix& bottom);
/// Column means as a 1 x cols matrix.
Matrix column_means(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> a) noexcept;

/// Lower-triangular Cholesky factor of a symmetric matrix.
/// Returns false (leaving `lower` unspecified) when the matrix is not positive definite.
bool cholesky(const Matrix& a, Matrix& lower);
/// Inverse of an SPD matrix through its Cholesky factor.
Matrix spd_inverse_from_cholesky(const Matrix& lower);

/// Linear kernel Gram matrix K = X X^T. Requires at least two rows.
Matrix gram_linear(const Matrix& x);
/// H K H with H = I - (1/n) 11^T.
Matrix center_gram(const Matrix& k);
/// tr(HKH * HLH) / (n-1)^2.
double hsic(const Matrix& k, const Matrix& l);

// UBM1 container: "UBM1", u32 rows, u32 cols, rows*cols f64, all little-endian.
std::vector<std::uint8_t> encode_ubm1(const Matrix& m);
Matrix decode_ubm1(std::span<const std::uint8_t> bytes);
void write_ubm1(const std::filesystem::path& path, const Matrix& m);
Matrix read_ubm1(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace unlbench
