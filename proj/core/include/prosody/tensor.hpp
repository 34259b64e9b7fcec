#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "prosody/errors.hpp"

namespace prosody {

/// Row-major dense array of doubles with up to 4 axes. The numeric substrate
/// trains in double precision; checkpoints store float32.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  /// 1-D tensor from values.
  static Tensor vec(std::vector<double> values);
  /// 2-D tensor from nested braces, rows of equal length.
  static Tensor mat(std::vector<std::vector<double>> rows);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors (rows x cols).
  double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Throws ContractError naming both shapes unless they match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Plain (non-autodiff) kernels shared by the tape and by inference code.

/// c += a * b for row-major matrices: a is n x k, b is k x m, c is n x m.
void matmul_accum(const double* a, const double* b, double* c, int n, int k, int m);
/// c += a^T * b: a is k x n, b is k x m, c is n x m.
void matmul_accum_at(const double* a, const double* b, double* c, int n, int k, int m);
/// c += a * b^T: a is n x k, b is m x k, c is n x m.
void matmul_accum_bt(const double* a, const double* b, double* c, int n, int k, int m);

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace prosody
