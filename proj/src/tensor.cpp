#include "mcg/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace mcg {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap cmap(const Tensor& t) { return ECMap(t.data(), t.rows(), t.cols()); }
EMap mmap(Tensor& t) { return EMap(t.data(), t.rows(), t.cols()); }
}  // namespace

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != size_t(rows) * cols) fail("tensor data size does not match shape");
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = int(rows.size());
  cols_ = rows_ > 0 ? int(rows.begin()->size()) : 0;
  data_.reserve(size_t(rows_) * cols_);
  for (const auto& r : rows) {
    if (int(r.size()) != cols_) fail("ragged tensor initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::full(int rows, int cols, double v) {
  Tensor t(rows, cols);
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  const int n = int(v.size());
  return Tensor(1, n, std::move(v));
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) fail("item() on non-scalar tensor " + shape_str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_inplace(const Tensor& o) {
  if (!same_shape(o)) fail("shape mismatch in add: " + shape_str() + " vs " + o.shape_str());
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

Tensor Tensor::transposed() const {
  Tensor t(cols_, rows_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor matmul_values(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const int m = trans_a ? a.cols() : a.rows();
  const int ka = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  if (ka != kb)
    fail("matmul inner dimension mismatch: " + a.shape_str() + (trans_a ? "^T" : "") + " * " +
         b.shape_str() + (trans_b ? "^T" : ""));
  Tensor c(m, n);
  matmul_acc(c, a, b, trans_a, trans_b);
  return c;
}

void matmul_acc(Tensor& c, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  auto ma = cmap(a);
  auto mb = cmap(b);
  auto mc = mmap(c);
  if (!trans_a && !trans_b)
    mc.noalias() += ma * mb;
  else if (trans_a && !trans_b)
    mc.noalias() += ma.transpose() * mb;
  else if (!trans_a && trans_b)
    mc.noalias() += ma * mb.transpose();
  else
    mc.noalias() += ma.transpose() * mb.transpose();
}

void fail(const std::string& msg) { throw Error(msg); }

}  // namespace mcg
