#include "prosody/tensor.hpp"

#include <sstream>

namespace prosody {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() > 4) throw ContractError("tensor rank > 4: " + shape_to_string(shape_));
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.size() > 4) throw ContractError("tensor rank > 4: " + shape_to_string(shape_));
  if (data_.size() != shape_size(shape_)) {
    throw ContractError("value count " + std::to_string(data_.size()) + " does not match shape " +
                        shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::mat(std::vector<std::vector<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r ? static_cast<int>(rows[0].size()) : 0;
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw ContractError("ragged rows in Tensor::mat");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat));
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

void matmul_accum(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_accum_at(const double* a, const double* b, double* c, int n, int k, int m) {
  // c[i,j] += sum_kk a[kk,i] * b[kk,j]
  for (int kk = 0; kk < k; ++kk) {
    const double* arow = a + static_cast<std::size_t>(kk) * n;
    const double* brow = b + static_cast<std::size_t>(kk) * m;
    for (int i = 0; i < n; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_accum_bt(const double* a, const double* b, double* c, int n, int k, int m) {
  // c[i,j] += sum_kk a[i,kk] * b[j,kk]
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ContractError("matmul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor c({a.rows(), b.cols()});
  matmul_accum(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

}  // namespace prosody
