#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcg {

/// Dense row-major matrix of doubles. All network state (activations,
/// parameters, gradients) is 2-D; higher-rank data (clips, patch grids)
/// lives in dedicated structs that flatten into these.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(size_t(rows) * cols, 0.0) {}
  Tensor(int rows, int cols, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double v);
  static Tensor ones(int rows, int cols) { return full(rows, cols, 1.0); }
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  double& operator()(int r, int c) { return data_[size_t(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[size_t(r) * cols_ + c]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  double item() const;  // requires 1x1

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row_ptr(int r) { return data_.data() + size_t(r) * cols_; }
  const double* row_ptr(int r) const { return data_.data() + size_t(r) * cols_; }

  void fill(double v);
  void add_inplace(const Tensor& o);
  bool all_finite() const;
  double abs_max() const;

  Tensor transposed() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// C = A * B, with optional transposition of either operand.
Tensor matmul_values(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// C += A * B (same transposition flags). Shapes must already agree.
void matmul_acc(Tensor& c, const Tensor& a, const Tensor& b, bool trans_a = false,
                bool trans_b = false);

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void fail(const std::string& msg);

}  // namespace mcg
