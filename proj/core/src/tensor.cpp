#include "speechut/tensor.hpp"

#include <cmath>
#include <sstream>

namespace speechut {

int64_t shape_numel(const std::vector<int64_t>& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ShapeError("negative extent in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
  if (shape_numel(shape) != numel())
    throw ShapeError("tensor data size " + std::to_string(v.size()) + " does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int64_t> s) {
  Tensor t;
  int64_t n = shape_numel(s);
  t.shape = std::move(s);
  t.v.assign(static_cast<size_t>(n), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> s, double value) {
  Tensor t = zeros(std::move(s));
  for (double& x : t.v) x = value;
  return t;
}

Tensor Tensor::scalar(double x) {
  Tensor t;
  t.shape = {};
  t.v = {x};
  return t;
}

Tensor Tensor::row(std::vector<double> data) {
  Tensor t;
  t.shape = {static_cast<int64_t>(data.size())};
  t.v = std::move(data);
  return t;
}

Tensor Tensor::matrix(int64_t r, int64_t c, std::vector<double> data) {
  return Tensor({r, c}, std::move(data));
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw ContractError("scalar_value() on tensor of shape " + shape_str());
  return v.empty() ? 0.0 : v[0];
}

int64_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
  return shape[0];
}

int64_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
  return shape[1];
}

double& Tensor::at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols() + j)]; }
double Tensor::at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols() + j)]; }

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

namespace kern {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_str() + " x " + b.shape_str());
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  out = Tensor::zeros({m, n});
  const double* pa = a.v.data();
  const double* pb = b.v.data();
  double* po = out.v.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_str() + " x " + b.shape_str() + "^T");
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a.v.data() + i * k;
    double* orow = out.v.data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b.v.data() + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      orow[j] = s;
    }
  }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + a.shape_str() + "^T x " + b.shape_str());
  const int64_t k = a.rows(), m = a.cols(), n = b.cols();
  out = Tensor::zeros({m, n});
  for (int64_t kk = 0; kk < k; ++kk) {
    const double* arow = a.v.data() + kk * m;
    const double* brow = b.v.data() + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      const double aik = arow[i];
      if (aik == 0.0) continue;
      double* orow = out.v.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

void softmax_rows(const Tensor& x, Tensor& out) {
  const int64_t r = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("softmax over empty axis");
  out = Tensor::zeros({r, c});
  for (int64_t i = 0; i < r; ++i) {
    const double* xi = x.v.data() + i * c;
    double* oi = out.v.data() + i * c;
    double mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      s += oi[j];
    }
    for (int64_t j = 0; j < c; ++j) oi[j] /= s;
  }
}

void log_softmax_rows(const Tensor& x, Tensor& out) {
  const int64_t r = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("log_softmax over empty axis");
  out = Tensor::zeros({r, c});
  for (int64_t i = 0; i < r; ++i) {
    const double* xi = x.v.data() + i * c;
    double* oi = out.v.data() + i * c;
    double mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += std::exp(xi[j] - mx);
    const double lse = mx + std::log(s);
    for (int64_t j = 0; j < c; ++j) oi[j] = xi[j] - lse;
  }
}

void gelu(const Tensor& x, Tensor& out) {
  out = x;
  for (double& t : out.v) t = 0.5 * t * (1.0 + std::erf(t * M_SQRT1_2));
}

void layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                    Tensor& out, std::vector<double>* save_mean, std::vector<double>* save_rstd) {
  const int64_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c)
    throw ShapeError("layernorm: affine params " + gain.shape_str() + "/" + bias.shape_str() +
                     " do not match feature dim " + std::to_string(c));
  out = Tensor::zeros({r, c});
  if (save_mean) save_mean->assign(static_cast<size_t>(r), 0.0);
  if (save_rstd) save_rstd->assign(static_cast<size_t>(r), 0.0);
  for (int64_t i = 0; i < r; ++i) {
    const double* xi = x.v.data() + i * c;
    double* oi = out.v.data() + i * c;
    double mean = 0.0;
    for (int64_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < c; ++j) oi[j] = (xi[j] - mean) * rstd * gain.v[j] + bias.v[j];
    if (save_mean) (*save_mean)[static_cast<size_t>(i)] = mean;
    if (save_rstd) (*save_rstd)[static_cast<size_t>(i)] = rstd;
  }
}

int64_t conv1d_out_len(int64_t t, int64_t k, int64_t s) {
  if (t < k) throw InputError("conv1d: input length " + std::to_string(t) + " shorter than kernel " + std::to_string(k));
  return (t - k) / s + 1;
}

void conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, Tensor& out) {
  if (x.rank() != 2 || w.rank() != 3) throw ShapeError("conv1d: x " + x.shape_str() + ", w " + w.shape_str());
  const int64_t t = x.dim(0), cin = x.dim(1);
  const int64_t cout = w.dim(0), wcin = w.dim(1), k = w.dim(2);
  if (cin != wcin) throw ShapeError("conv1d: channel mismatch x " + x.shape_str() + " vs w " + w.shape_str());
  if (b.numel() != cout) throw ShapeError("conv1d: bias size mismatch");
  if (stride < 1) throw ContractError("conv1d: stride must be >= 1");
  const int64_t to = conv1d_out_len(t, k, stride);
  out = Tensor::zeros({to, cout});
  for (int64_t i = 0; i < to; ++i) {
    double* orow = out.v.data() + i * cout;
    for (int64_t co = 0; co < cout; ++co) orow[co] = b.v[static_cast<size_t>(co)];
    const double* xw = x.v.data() + i * stride * cin;
    for (int64_t dk = 0; dk < k; ++dk) {
      const double* xr = xw + dk * cin;
      for (int64_t co = 0; co < cout; ++co) {
        const double* wr = w.v.data() + (co * cin + 0) * k;  // w[co,ci,dk], stride over ci is k
        double s = 0.0;
        for (int64_t ci = 0; ci < cin; ++ci) s += xr[ci] * wr[ci * k + dk];
        orow[co] += s;
      }
    }
  }
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

void scale_inplace(Tensor& a, double c) {
  for (double& x : a.v) x *= c;
}

}  // namespace kern

}  // namespace speechut
