#include "speechut/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace speechut {

const Tape::Node& Tape::node(int32_t ix) const {
  if (ix < 0 || static_cast<size_t>(ix) >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[static_cast<size_t>(ix)];
}

Tape::Node& Tape::node(int32_t ix) {
  if (ix < 0 || static_cast<size_t>(ix) >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[static_cast<size_t>(ix)];
}

void Tape::accum(Tensor& dst, const Tensor& src) {
  if (dst.numel() == 0 && dst.shape.empty()) throw ContractError("gradient buffer not allocated");
  kern::add_inplace(dst, src);
}

Var Tape::push(Tensor value, std::vector<int32_t> inputs, std::function<void(Tape&, int32_t)> bp,
               bool check_finite, const char* opname) {
  if (check_finite && !value.all_finite())
    throw NumericError(std::string("non-finite value produced by op '") + opname + "'");
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  for (int32_t i : n.inputs)
    if (node(i).requires_grad) n.requires_grad = true;
  n.backprop = std::move(bp);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor t, bool requires_grad) {
  if (!t.all_finite()) throw NumericError("non-finite input tensor");
  Node n;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.external_grad = &p.grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::grad_of(Var v) const {
  const Node& n = node(v.ix);
  if (n.grad.shape != n.value.shape) throw ContractError("gradient not computed for this Var");
  return n.grad;
}

Var Tape::add(Var a, Var b) {
  Tensor out = val(a);
  kern::add_inplace(out, val(b));
  return push(std::move(out), {a.ix, b.ix}, [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) accum(t.grad_buf(a.ix), g);
    if (t.node_requires_grad(b.ix)) accum(t.grad_buf(b.ix), g);
  }, true, "add");
}

Var Tape::sub(Var a, Var b) {
  Tensor out = val(a);
  const Tensor& bv = val(b);
  if (!out.same_shape(bv)) throw ShapeError("sub: shape mismatch");
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  return push(std::move(out), {a.ix, b.ix}, [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) accum(t.grad_buf(a.ix), g);
    if (t.node_requires_grad(b.ix)) {
      Tensor neg = g;
      kern::scale_inplace(neg, -1.0);
      accum(t.grad_buf(b.ix), neg);
    }
  }, true, "sub");
}

Var Tape::mul(Var a, Var b) {
  Tensor out = val(a);
  const Tensor& bv = val(b);
  if (!out.same_shape(bv)) throw ShapeError("mul: shape mismatch");
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  return push(std::move(out), {a.ix, b.ix}, [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) {
      Tensor da = g;
      const Tensor& bv2 = t.value_at(b.ix);
      for (size_t i = 0; i < da.v.size(); ++i) da.v[i] *= bv2.v[i];
      accum(t.grad_buf(a.ix), da);
    }
    if (t.node_requires_grad(b.ix)) {
      Tensor db = g;
      const Tensor& av2 = t.value_at(a.ix);
      for (size_t i = 0; i < db.v.size(); ++i) db.v[i] *= av2.v[i];
      accum(t.grad_buf(b.ix), db);
    }
  }, true, "mul");
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  kern::scale_inplace(out, c);
  return push(std::move(out), {a.ix}, [a, c](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    Tensor da = t.grad_buf(self);
    kern::scale_inplace(da, c);
    accum(t.grad_buf(a.ix), da);
  }, true, "scale");
}

Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& av = val(a);
  const Tensor& bv = val(bias);
  if (av.rank() != 2 || bv.numel() != av.cols())
    throw ShapeError("add_rowvec: " + av.shape_str() + " + " + bv.shape_str());
  Tensor out = av;
  const int64_t r = av.rows(), c = av.cols();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.v[static_cast<size_t>(i * c + j)] += bv.v[static_cast<size_t>(j)];
  return push(std::move(out), {a.ix, bias.ix}, [a, bias](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) accum(t.grad_buf(a.ix), g);
    if (t.node_requires_grad(bias.ix)) {
      Tensor& db = t.grad_buf(bias.ix);
      const int64_t r2 = g.rows(), c2 = g.cols();
      for (int64_t i = 0; i < r2; ++i)
        for (int64_t j = 0; j < c2; ++j) db.v[static_cast<size_t>(j)] += g.at(i, j);
    }
  }, true, "add_rowvec");
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  const Tensor& av = val(a);
  if (shape_numel(shape) != av.numel())
    throw ShapeError("reshape: element count mismatch " + av.shape_str());
  Tensor out(std::move(shape), av.v);
  return push(std::move(out), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += g.v[i];
  }, true, "reshape");
}

Var Tape::transpose(Var a) {
  const Tensor& av = val(a);
  if (av.rank() != 2) throw ShapeError("transpose: rank-2 required");
  const int64_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return push(std::move(out), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    const int64_t r2 = g.rows(), c2 = g.cols();
    for (int64_t i = 0; i < r2; ++i)
      for (int64_t j = 0; j < c2; ++j) da.at(j, i) += g.at(i, j);
  }, true, "transpose");
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
  const Tensor& av = val(a);
  if (av.rank() != 2 || c0 < 0 || c1 > av.cols() || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") on " + av.shape_str());
  const int64_t r = av.rows(), w = c1 - c0;
  Tensor out = Tensor::zeros({r, w});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, c0 + j);
  return push(std::move(out), {a.ix}, [a, c0, w](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    for (int64_t i = 0; i < g.rows(); ++i)
      for (int64_t j = 0; j < w; ++j) da.at(i, c0 + j) += g.at(i, j);
  }, true, "slice_cols");
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty");
  int64_t r = val(parts[0]).rows(), total = 0;
  for (Var p : parts) {
    if (val(p).rows() != r) throw ShapeError("concat_cols: row mismatch");
    total += val(p).cols();
  }
  Tensor out = Tensor::zeros({r, total});
  int64_t off = 0;
  std::vector<int32_t> ins;
  std::vector<int64_t> offs;
  for (Var p : parts) {
    const Tensor& pv = val(p);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
    ins.push_back(p.ix);
    offs.push_back(off);
    off += pv.cols();
  }
  std::vector<Var> parts_copy = parts;
  return push(std::move(out), std::move(ins), [parts_copy, offs](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    for (size_t pi = 0; pi < parts_copy.size(); ++pi) {
      Var p = parts_copy[pi];
      if (!t.node_requires_grad(p.ix)) continue;
      Tensor& dp = t.grad_buf(p.ix);
      const int64_t c = dp.cols(), o = offs[pi];
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < c; ++j) dp.at(i, j) += g.at(i, o + j);
    }
  }, true, "concat_cols");
}

Var Tape::mix_rows(Var h, Var u, std::vector<uint8_t> replace) {
  const Tensor& hv = val(h);
  const Tensor& uv = val(u);
  if (!hv.same_shape(uv)) throw ShapeError("mix_rows: alignment error " + hv.shape_str() + " vs " + uv.shape_str());
  if (static_cast<int64_t>(replace.size()) != hv.rows()) throw ShapeError("mix_rows: mask length mismatch");
  Tensor out = hv;
  const int64_t c = hv.cols();
  for (int64_t i = 0; i < hv.rows(); ++i)
    if (replace[static_cast<size_t>(i)])
      std::copy_n(uv.v.data() + i * c, c, out.v.data() + i * c);
  return push(std::move(out), {h.ix, u.ix}, [h, u, replace](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    const int64_t c2 = g.cols();
    if (t.node_requires_grad(h.ix)) {
      Tensor& dh = t.grad_buf(h.ix);
      for (int64_t i = 0; i < g.rows(); ++i)
        if (!replace[static_cast<size_t>(i)])
          for (int64_t j = 0; j < c2; ++j) dh.at(i, j) += g.at(i, j);
    }
    if (t.node_requires_grad(u.ix)) {
      Tensor& du = t.grad_buf(u.ix);
      for (int64_t i = 0; i < g.rows(); ++i)
        if (replace[static_cast<size_t>(i)])
          for (int64_t j = 0; j < c2; ++j) du.at(i, j) += g.at(i, j);
    }
  }, true, "mix_rows");
}

Var Tape::matmul(Var a, Var b) {
  Tensor out;
  kern::matmul(val(a), val(b), out);
  return push(std::move(out), {a.ix, b.ix}, [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) {
      Tensor da;
      kern::matmul_nt(g, t.value_at(b.ix), da);  // g x B^T
      accum(t.grad_buf(a.ix), da);
    }
    if (t.node_requires_grad(b.ix)) {
      Tensor db;
      kern::matmul_tn(t.value_at(a.ix), g, db);  // A^T x g
      accum(t.grad_buf(b.ix), db);
    }
  }, true, "matmul");
}

Var Tape::matmul_nt(Var a, Var b) {
  Tensor out;
  kern::matmul_nt(val(a), val(b), out);
  return push(std::move(out), {a.ix, b.ix}, [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    if (t.node_requires_grad(a.ix)) {
      Tensor da;
      kern::matmul(g, t.value_at(b.ix), da);  // g x B
      accum(t.grad_buf(a.ix), da);
    }
    if (t.node_requires_grad(b.ix)) {
      Tensor db;
      kern::matmul_tn(g, t.value_at(a.ix), db);  // g^T x A
      accum(t.grad_buf(b.ix), db);
    }
  }, true, "matmul_nt");
}

Var Tape::softmax(Var a, int axis) {
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  if (axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  Tensor out;
  kern::softmax_rows(val(a), out);
  return push(std::move(out), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& y = t.value_at(self);
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    const int64_t r = y.rows(), c = y.cols();
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int64_t j = 0; j < c; ++j) da.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  }, true, "softmax");
}

Var Tape::log_softmax_rows(Var a) {
  Tensor out;
  kern::log_softmax_rows(val(a), out);
  return push(std::move(out), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& y = t.value_at(self);  // log probs
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    const int64_t r = y.rows(), c = y.cols();
    for (int64_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (int64_t j = 0; j < c; ++j) gs += g.at(i, j);
      for (int64_t j = 0; j < c; ++j) da.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
    }
  }, true, "log_softmax");
}

Var Tape::gelu(Var a) {
  Tensor out;
  kern::gelu(val(a), out);
  return push(std::move(out), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& x = t.value_at(a.ix);
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    constexpr double inv_sqrt2pi = 0.3989422804014326779399461;
    for (size_t i = 0; i < x.v.size(); ++i) {
      const double xi = x.v[i];
      const double phi = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
      da.v[i] += g.v[i] * (phi + xi * pdf);
    }
  }, true, "gelu");
}

Var Tape::layernorm_rows(Var a, Var gain, Var bias, double eps) {
  Tensor out;
  auto mean = std::make_shared<std::vector<double>>();
  auto rstd = std::make_shared<std::vector<double>>();
  kern::layernorm_rows(val(a), val(gain), val(bias), eps, out, mean.get(), rstd.get());
  return push(std::move(out), {a.ix, gain.ix, bias.ix}, [a, gain, bias, mean, rstd](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& x = t.value_at(a.ix);
    const Tensor& gn = t.value_at(gain.ix);
    const int64_t r = x.rows(), c = x.cols();
    const double cn = static_cast<double>(c);
    for (int64_t i = 0; i < r; ++i) {
      const double mu = (*mean)[static_cast<size_t>(i)];
      const double rs = (*rstd)[static_cast<size_t>(i)];
      // xhat_j = (x_j - mu) * rs
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double xhat = (x.at(i, j) - mu) * rs;
        const double dxhat = g.at(i, j) * gn.v[static_cast<size_t>(j)];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (t.node_requires_grad(gain.ix)) t.grad_buf(gain.ix).v[static_cast<size_t>(j)] += g.at(i, j) * xhat;
        if (t.node_requires_grad(bias.ix)) t.grad_buf(bias.ix).v[static_cast<size_t>(j)] += g.at(i, j);
      }
      if (t.node_requires_grad(a.ix)) {
        Tensor& da = t.grad_buf(a.ix);
        for (int64_t j = 0; j < c; ++j) {
          const double xhat = (x.at(i, j) - mu) * rs;
          const double dxhat = g.at(i, j) * gn.v[static_cast<size_t>(j)];
          da.at(i, j) += rs * (dxhat - sum_dxhat / cn - xhat * sum_dxhat_xhat / cn);
        }
      }
    }
  }, true, "layernorm");
}

Var Tape::normalize_rows(Var a) {
  const Tensor& x = val(a);
  if (x.rank() != 2) throw ShapeError("normalize_rows: rank-2 required");
  const int64_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros({r, c});
  auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(r), 0.0);
  for (int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += x.at(i, j) * x.at(i, j);
    const double n = std::sqrt(s);
    if (n < 1e-12) throw NumericError("normalize_rows: zero-norm row " + std::to_string(i));
    (*norms)[static_cast<size_t>(i)] = n;
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = x.at(i, j) / n;
  }
  return push(std::move(out), {a.ix}, [a, norms](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const Tensor& y = t.value_at(self);
    const Tensor& g = t.grad_buf(self);
    Tensor& da = t.grad_buf(a.ix);
    const int64_t r2 = y.rows(), c2 = y.cols();
    for (int64_t i = 0; i < r2; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c2; ++j) dot += g.at(i, j) * y.at(i, j);
      const double n = (*norms)[static_cast<size_t>(i)];
      for (int64_t j = 0; j < c2; ++j) da.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / n;
    }
  }, true, "normalize_rows");
}

Var Tape::conv1d(Var x, Var w, Var b, int64_t stride) {
  Tensor out;
  kern::conv1d(val(x), val(w), val(b), stride, out);
  return push(std::move(out), {x.ix, w.ix, b.ix}, [x, w, b, stride](Tape& t, int32_t self) {
    const Tensor& g = t.grad_buf(self);
    const Tensor& xv = t.value_at(x.ix);
    const Tensor& wv = t.value_at(w.ix);
    const int64_t to = g.rows(), cout = g.cols();
    const int64_t cin = xv.cols(), k = wv.dim(2);
    const bool need_x = t.node_requires_grad(x.ix);
    const bool need_w = t.node_requires_grad(w.ix);
    const bool need_b = t.node_requires_grad(b.ix);
    for (int64_t i = 0; i < to; ++i) {
      for (int64_t co = 0; co < cout; ++co) {
        const double gi = g.at(i, co);
        if (gi == 0.0) continue;
        if (need_b) t.grad_buf(b.ix).v[static_cast<size_t>(co)] += gi;
        for (int64_t dk = 0; dk < k; ++dk) {
          const int64_t xi = i * stride + dk;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double wv_ = wv.v[static_cast<size_t>((co * cin + ci) * k + dk)];
            const double xv_ = xv.at(xi, ci);
            if (need_x) t.grad_buf(x.ix).at(xi, ci) += gi * wv_;
            if (need_w) t.grad_buf(w.ix).v[static_cast<size_t>((co * cin + ci) * k + dk)] += gi * xv_;
          }
        }
      }
    }
  }, true, "conv1d");
}

Var Tape::embedding(Var table, std::vector<int> ids) {
  const Tensor& tab = val(table);
  if (tab.rank() != 2) throw ShapeError("embedding: table must be rank-2");
  const int64_t v = tab.rows(), d = tab.cols();
  for (int id : ids)
    if (id < 0 || id >= v)
      throw VocabError("embedding: id " + std::to_string(id) + " out of vocabulary of size " + std::to_string(v));
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tab.v.data() + static_cast<int64_t>(ids[i]) * d, d, out.v.data() + static_cast<int64_t>(i) * d);
  return push(std::move(out), {table.ix}, [table, ids](Tape& t, int32_t self) {
    if (!t.node_requires_grad(table.ix)) return;
    const Tensor& g = t.grad_buf(self);
    Tensor& dt = t.grad_buf(table.ix);
    const int64_t d2 = g.cols();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t j = 0; j < d2; ++j) dt.at(ids[i], j) += g.at(static_cast<int64_t>(i), j);
  }, true, "embedding");
}

Var Tape::relative_bias(Var table, std::vector<int> buckets, int64_t rows, int64_t cols) {
  const Tensor& tab = val(table);
  if (tab.rank() != 1) throw ShapeError("relative_bias: table must be rank-1");
  if (static_cast<int64_t>(buckets.size()) != rows * cols) throw ShapeError("relative_bias: bucket matrix size mismatch");
  const int64_t nb = tab.numel();
  Tensor out = Tensor::zeros({rows, cols});
  for (size_t i = 0; i < buckets.size(); ++i) {
    const int bkt = buckets[i];
    if (bkt < 0 || bkt >= nb) throw ContractError("relative_bias: bucket out of range");
    out.v[i] = tab.v[static_cast<size_t>(bkt)];
  }
  return push(std::move(out), {table.ix}, [table, buckets](Tape& t, int32_t self) {
    if (!t.node_requires_grad(table.ix)) return;
    const Tensor& g = t.grad_buf(self);
    Tensor& dt = t.grad_buf(table.ix);
    for (size_t i = 0; i < buckets.size(); ++i) dt.v[static_cast<size_t>(buckets[i])] += g.v[i];
  }, true, "relative_bias");
}

Var Tape::sum_all(Var a) {
  const Tensor& x = val(a);
  double s = 0.0;
  for (double t : x.v) s += t;
  return push(Tensor::scalar(s), {a.ix}, [a](Tape& t, int32_t self) {
    if (!t.node_requires_grad(a.ix)) return;
    const double g = t.grad_buf(self).v[0];
    Tensor& da = t.grad_buf(a.ix);
    for (double& d : da.v) d += g;
  }, true, "sum_all");
}

Var Tape::nll_pick(Var logp, std::vector<int> targets, std::vector<int> rows) {
  const Tensor& lp = val(logp);
  if (lp.rank() != 2) throw ShapeError("nll_pick: rank-2 required");
  if (static_cast<int64_t>(targets.size()) != lp.rows())
    throw ContractError("nll_pick: targets size must equal number of rows");
  double s = 0.0;
  for (int r : rows) {
    if (r < 0 || r >= lp.rows()) throw ContractError("nll_pick: row index out of range");
    const int z = targets[static_cast<size_t>(r)];
    if (z < 0 || z >= lp.cols()) throw VocabError("nll_pick: target id " + std::to_string(z) + " out of range");
    s -= lp.at(r, z);
  }
  return push(Tensor::scalar(s), {logp.ix}, [logp, targets, rows](Tape& t, int32_t self) {
    if (!t.node_requires_grad(logp.ix)) return;
    const double g = t.grad_buf(self).v[0];
    Tensor& dl = t.grad_buf(logp.ix);
    for (int r : rows) dl.at(r, targets[static_cast<size_t>(r)]) -= g;
  }, true, "nll_pick");
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets, double smooth_eps) {
  const int64_t n_rows = val(logits).rows();
  const double vocab = static_cast<double>(val(logits).cols());
  if (static_cast<int64_t>(targets.size()) != n_rows)
    throw ContractError("cross_entropy: targets length " + std::to_string(targets.size()) +
                        " vs logits rows " + std::to_string(n_rows));
  Var lp = log_softmax_rows(logits);
  std::vector<int> rows(targets.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  Var nll = nll_pick(lp, targets, rows);
  if (smooth_eps == 0.0) return nll;
  // smoothed target: (1-eps)*onehot + eps*uniform over all classes
  Var uniform_term = scale(sum_all(lp), -smooth_eps / vocab);
  return add(scale(nll, 1.0 - smooth_eps), uniform_term);
}

Var Tape::custom(Tensor out, std::vector<Var> inputs, std::function<void(Tape&, int32_t)> backprop,
                 bool check_finite) {
  std::vector<int32_t> ins;
  ins.reserve(inputs.size());
  for (Var v : inputs) ins.push_back(v.ix);
  return push(std::move(out), std::move(ins), std::move(backprop), check_finite, "custom");
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("backward() already ran on this tape; reset() first");
  Node& ln = node(loss.ix);
  if (!ln.value.is_scalar()) throw ContractError("backward() requires a scalar loss, got " + ln.value.shape_str());
  backward_done_ = true;

  // allocate grad buffers on the reachable requires_grad subgraph
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape);
  if (!ln.requires_grad) return;  // nothing to differentiate

  ln.grad.v[0] = 1.0;
  for (int32_t ix = loss.ix; ix >= 0; --ix) {
    Node& n = nodes_[static_cast<size_t>(ix)];
    if (!n.requires_grad || !n.backprop) continue;
    n.backprop(*this, ix);
  }
  for (Node& n : nodes_)
    if (n.external_grad && n.requires_grad) kern::add_inplace(*n.external_grad, n.grad);
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace speechut
