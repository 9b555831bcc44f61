#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speechut/common.hpp"

namespace speechut {

// Dense row-major float64 tensor. This is the only value type the numerical
// core computes on; gradients are carried separately (see autodiff.hpp).
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> data);

  static Tensor zeros(std::vector<int64_t> s);
  static Tensor full(std::vector<int64_t> s, double value);
  static Tensor scalar(double x);
  static Tensor row(std::vector<double> data);               // [n]
  static Tensor matrix(int64_t r, int64_t c, std::vector<double> data);

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool is_scalar() const { return shape.empty() || (shape.size() == 1 && shape[0] == 1); }
  double scalar_value() const;

  // rank-2 accessors
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t i, int64_t j);
  double at(int64_t i, int64_t j) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& s);

// Value-space kernels. Both the autodiff tape (forward passes) and the
// no-grad inference path call these, so the two paths cannot drift apart.
namespace kern {

void matmul(const Tensor& a, const Tensor& b, Tensor& out);     // [m,k]x[k,n] -> [m,n]
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out);  // a[m,k] x b[n,k]^T -> [m,n]
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);  // a[k,m]^T x b[k,n] -> [m,n]
void softmax_rows(const Tensor& x, Tensor& out);
void log_softmax_rows(const Tensor& x, Tensor& out);
void gelu(const Tensor& x, Tensor& out);
// y = (x - mean)/sqrt(var + eps) * gain + bias, per row; optionally saves
// per-row mean and reciprocal std for the backward pass.
void layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                    Tensor& out, std::vector<double>* save_mean = nullptr,
                    std::vector<double>* save_rstd = nullptr);
// x [T,Cin], w [Cout,Cin,k], b [Cout]; valid convolution, T' = (T-k)/s + 1
void conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, Tensor& out);
int64_t conv1d_out_len(int64_t t, int64_t k, int64_t s);

void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, double c);

}  // namespace kern

}  // namespace speechut
