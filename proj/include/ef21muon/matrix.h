// Copyright 2026 The ef21muon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#ifndef EF21MUON_MATRIX_H_
#define EF21MUON_MATRIX_H_

#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace ef21 {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
};

// Dense row-major matrix of doubles. A default-constructed matrix is empty
// and only serves as a placeholder; every operation requires rows, cols >= 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Matrix(Shape shape, double fill = 0.0)
      : Matrix(shape.rows, shape.cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix FromRows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Matrix Identity(std::size_t n);
  static Matrix Diagonal(const std::vector<double>& diag);
  static Matrix Diagonal(std::size_t rows, std::size_t cols,
                         const std::vector<double>& diag);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  Shape shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);
  // this += s * o
  Matrix& Axpy(double s, const Matrix& o);

  Matrix Transpose() const;
  Matrix Column(std::size_t j) const;
  Matrix Row(std::size_t i) const;
  void SetZero();
  bool IsZero() const;
  bool AllFinite() const;

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }
  bool operator!=(const Matrix& o) const { return !(*this == o); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator-(Matrix a);
Matrix operator*(double s, Matrix a);
Matrix operator*(Matrix a, double s);

Matrix MatMul(const Matrix& a, const Matrix& b);
// a^T b without forming the transpose.
Matrix MatTMul(const Matrix& a, const Matrix& b);
// a b^T without forming the transpose.
Matrix MatMulT(const Matrix& a, const Matrix& b);

// Trace inner product <a, b> = tr(a^T b).
double Dot(const Matrix& a, const Matrix& b);
double FrobeniusNorm(const Matrix& a);
double MaxAbsDiff(const Matrix& a, const Matrix& b);

// Throws NonFiniteError naming `what` if any entry is NaN or Inf.
void RequireFinite(const Matrix& m, const char* what);
// Throws ShapeError unless both operands share a shape.
void RequireSameShape(const Matrix& a, const Matrix& b, const char* what);

// Solves a x = b for symmetric positive definite a (Cholesky).
Matrix CholeskySolve(const Matrix& a, const Matrix& b);

std::string ToString(const Matrix& m, int precision = 6);

// The model state X = [X_1, ..., X_p].
using LayeredTensor = std::vector<Matrix>;

LayeredTensor ZerosLike(const LayeredTensor& x);
LayeredTensor ZerosOf(const std::vector<Shape>& shapes);
std::vector<Shape> ShapesOf(const LayeredTensor& x);
std::size_t ParameterCount(const std::vector<Shape>& shapes);
void AddInPlace(LayeredTensor& a, const LayeredTensor& b, double s = 1.0);
LayeredTensor Sum(const LayeredTensor& a, const LayeredTensor& b);
LayeredTensor Difference(const LayeredTensor& a, const LayeredTensor& b);
LayeredTensor Scaled(const LayeredTensor& a, double s);
double MaxAbsDiff(const LayeredTensor& a, const LayeredTensor& b);
bool BitEqual(const LayeredTensor& a, const LayeredTensor& b);

}  // namespace ef21

#endif  // EF21MUON_MATRIX_H_
