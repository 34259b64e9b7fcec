#include "prosody/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prosody/errors.hpp"

namespace prosody {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaskFill = -1e30;
constexpr double kTinyProb = 1e-300;

double log_sum_exp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double log_sum_exp3(double a, double b, double c) { return log_sum_exp2(log_sum_exp2(a, b), c); }

}  // namespace

const Tensor& Value::val() const { return tape->value_of(*this); }

Value Tape::emit(Tensor value, std::initializer_list<Value> parents) {
  Node nd;
  nd.value = std::move(value);
  for (const Value& p : parents) {
    if (p.tape != this) throw ContractError("tape op mixes nodes from different tapes");
    nd.requires_grad = nd.requires_grad || wants_grad(p);
  }
  nodes_.push_back(std::move(nd));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int idx) {
  Node& nd = node(idx);
  if (!nd.grad_alloc) {
    nd.grad = Tensor::zeros(nd.value.shape());
    nd.grad_alloc = true;
  }
  return nd.grad;
}

Tensor Tape::grad_of(Value v) const {
  const Node& nd = nodes_[static_cast<size_t>(v.idx)];
  if (nd.grad_alloc) return nd.grad;
  return Tensor::zeros(nd.value.shape());
}

Value Tape::input(Tensor v) { return emit(std::move(v), {}); }

Value Tape::param(ParameterStore& store, const std::string& name) {
  Param& p = store.at(name);
  Value v = emit(p.value, {});
  Node& nd = node(v.idx);
  nd.requires_grad = true;
  nd.bound = &p;
  nd.bound_store = &store;
  return v;
}

Value Tape::add(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Value r = emit(std::move(out), {a, b});
  int ia = a.idx, ib = b.idx;
  node(r.idx).backprop = [ia, ib](Tape& t, Node& nd) {
    for (int p : {ia, ib}) {
      if (!t.wants_grad({&t, p})) continue;
      Tensor& g = t.grad_buf(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    }
  };
  return r;
}

Value Tape::add_rowvec(Value a, Value bias) {
  const Tensor& av = a.val();
  const Tensor& bv = bias.val();
  if (av.rank() != 2 || bv.rank() != 1 || av.cols() != bv.dim(0)) {
    throw ContractError("add_rowvec: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out = av;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv[static_cast<size_t>(j)];
  Value r = emit(std::move(out), {a, bias});
  int ia = a.idx, ib = bias.idx;
  node(r.idx).backprop = [ia, ib](Tape& t, Node& nd) {
    int n = nd.value.rows(), m = nd.value.cols();
    if (t.wants_grad({&t, ia})) {
      Tensor& ga = t.grad_buf(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[i];
    }
    if (t.wants_grad({&t, ib})) {
      Tensor& gb = t.grad_buf(ib);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb[static_cast<size_t>(j)] += nd.grad.at(i, j);
    }
  };
  return r;
}

Value Tape::scale(Value a, double c) {
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia, c](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    Tensor& g = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * nd.grad[i];
  };
  return r;
}

Value Tape::mul(Value a, Value b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Value r = emit(std::move(out), {a, b});
  int ia = a.idx, ib = b.idx;
  node(r.idx).backprop = [ia, ib](Tape& t, Node& nd) {
    const Tensor& av = t.node(ia).value;
    const Tensor& bv2 = t.node(ib).value;
    if (t.wants_grad({&t, ia})) {
      Tensor& g = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i] * bv2[i];
    }
    if (t.wants_grad({&t, ib})) {
      Tensor& g = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i] * av[i];
    }
  };
  return r;
}

Value Tape::relu(Value a) {
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    const Tensor& x = t.node(ia).value;
    Tensor& g = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > 0.0 ? nd.grad[i] : 0.0;
  };
  return r;
}

Value Tape::slice_cols(Value a, int start, int len) {
  const Tensor& av = a.val();
  if (av.rank() != 2 || start < 0 || len <= 0 || start + len > av.cols()) {
    throw ContractError("slice_cols: bad range [" + std::to_string(start) + "," +
                        std::to_string(start + len) + ") for " + av.shape_str());
  }
  Tensor out({av.rows(), len});
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = av.at(i, start + j);
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia, start, len](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    Tensor& g = t.grad_buf(ia);
    for (int i = 0; i < nd.value.rows(); ++i)
      for (int j = 0; j < len; ++j) g.at(i, start + j) += nd.grad.at(i, j);
  };
  return r;
}

Value Tape::slice_rows(Value a, int start, int len) {
  const Tensor& av = a.val();
  if (av.rank() != 2 || start < 0 || len <= 0 || start + len > av.rows()) {
    throw ContractError("slice_rows: bad range for " + av.shape_str());
  }
  Tensor out({len, av.cols()});
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(start + i, j);
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia, start, len](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    Tensor& g = t.grad_buf(ia);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < nd.value.cols(); ++j) g.at(start + i, j) += nd.grad.at(i, j);
  };
  return r;
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  int n = parts[0].rows();
  int m = 0;
  for (const Value& p : parts) {
    if (p.val().rank() != 2 || p.rows() != n) throw ContractError("concat_cols: row mismatch");
    m += p.cols();
  }
  Tensor out({n, m});
  int off = 0;
  bool rg = false;
  for (const Value& p : parts) {
    const Tensor& pv = p.val();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
    off += pv.cols();
    rg = rg || wants_grad(p);
  }
  Node nd;
  nd.value = std::move(out);
  nd.requires_grad = rg;
  std::vector<int> idxs;
  std::vector<int> widths;
  for (const Value& p : parts) {
    idxs.push_back(p.idx);
    widths.push_back(p.cols());
  }
  nd.backprop = [idxs, widths](Tape& t, Node& self) {
    int off2 = 0;
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      if (t.wants_grad({&t, idxs[k]})) {
        Tensor& g = t.grad_buf(idxs[k]);
        for (int i = 0; i < self.value.rows(); ++i)
          for (int j = 0; j < widths[k]; ++j) g.at(i, j) += self.grad.at(i, off2 + j);
      }
      off2 += widths[k];
    }
  };
  nodes_.push_back(std::move(nd));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::zero_rows(Value a, const std::vector<bool>& valid) {
  const Tensor& av = a.val();
  if (av.rank() != 2 || static_cast<int>(valid.size()) != av.rows()) {
    throw ContractError("zero_rows: mask length != rows");
  }
  Tensor out = av;
  for (int i = 0; i < out.rows(); ++i) {
    if (valid[static_cast<size_t>(i)]) continue;
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) = 0.0;
  }
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia, valid](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    Tensor& g = t.grad_buf(ia);
    for (int i = 0; i < nd.value.rows(); ++i) {
      if (!valid[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < nd.value.cols(); ++j) g.at(i, j) += nd.grad.at(i, j);
    }
  };
  return r;
}

Value Tape::mask_cols(Value a, const std::vector<bool>& valid) {
  const Tensor& av = a.val();
  if (av.rank() != 2 || static_cast<int>(valid.size()) != av.cols()) {
    throw ContractError("mask_cols: mask length != cols");
  }
  Tensor out = av;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j)
      if (!valid[static_cast<size_t>(j)]) out.at(i, j) += kMaskFill;
  Value r = emit(std::move(out), {a});
  int ia = a.idx;
  node(r.idx).backprop = [ia](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ia})) return;
    Tensor& g = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
  };
  return r;
}

Value Tape::matmul(Value a, Value b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ContractError("matmul: incompatible shapes " + av.shape_str() + " vs " + bv.shape_str());
  }
  int n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out({n, m});
  matmul_accum(av.data(), bv.data(), out.data(), n, k, m);
  Value r = emit(std::move(out), {a, b});
  int ia = a.idx, ib = b.idx;
  node(r.idx).backprop = [ia, ib, n, k, m](Tape& t, Node& nd) {
    const Tensor& av2 = t.node(ia).value;
    const Tensor& bv2 = t.node(ib).value;
    if (t.wants_grad({&t, ia})) {
      matmul_accum_bt(nd.grad.data(), bv2.data(), t.grad_buf(ia).data(), n, m, k);
    }
    if (t.wants_grad({&t, ib})) {
      matmul_accum_at(av2.data(), nd.grad.data(), t.grad_buf(ib).data(), k, n, m);
    }
  };
  return r;
}

Value Tape::matmul_bt(Value a, Value b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols()) {
    throw ContractError("matmul_bt: incompatible shapes " + av.shape_str() + " vs " + bv.shape_str());
  }
  int n = av.rows(), k = av.cols(), m = bv.rows();
  Tensor out({n, m});
  matmul_accum_bt(av.data(), bv.data(), out.data(), n, k, m);
  Value r = emit(std::move(out), {a, b});
  int ia = a.idx, ib = b.idx;
  node(r.idx).backprop = [ia, ib, n, k, m](Tape& t, Node& nd) {
    const Tensor& av2 = t.node(ia).value;
    const Tensor& bv2 = t.node(ib).value;
    if (t.wants_grad({&t, ia})) {
      matmul_accum(nd.grad.data(), bv2.data(), t.grad_buf(ia).data(), n, m, k);
    }
    if (t.wants_grad({&t, ib})) {
      matmul_accum_at(nd.grad.data(), av2.data(), t.grad_buf(ib).data(), m, n, k);
    }
  };
  return r;
}

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
  const Tensor& xv = x.val();
  const Tensor& gv = gamma.val();
  const Tensor& bv = beta.val();
  if (xv.rank() != 2 || gv.rank() != 1 || bv.rank() != 1 || gv.dim(0) != xv.cols() || bv.dim(0) != xv.cols()) {
    throw ContractError("layer_norm: shape mismatch");
  }
  int n = xv.rows(), m = xv.cols();
  Tensor out({n, m});
  std::vector<double> xhat(static_cast<size_t>(n) * m);
  std::vector<double> inv_std(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += xv.at(i, j);
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= m;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < m; ++j) {
      double xh = (xv.at(i, j) - mean) * inv;
      xhat[static_cast<size_t>(i) * m + j] = xh;
      out.at(i, j) = gv[static_cast<size_t>(j)] * xh + bv[static_cast<size_t>(j)];
    }
  }
  Value r = emit(std::move(out), {x, gamma, beta});
  int ix = x.idx, ig = gamma.idx, ib = beta.idx;
  node(r.idx).backprop = [ix, ig, ib, n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, Node& nd) {
    const Tensor& gv2 = t.node(ig).value;
    if (t.wants_grad({&t, ig})) {
      Tensor& gg = t.grad_buf(ig);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gg[static_cast<size_t>(j)] += nd.grad.at(i, j) * xhat[static_cast<size_t>(i) * m + j];
    }
    if (t.wants_grad({&t, ib})) {
      Tensor& gb = t.grad_buf(ib);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb[static_cast<size_t>(j)] += nd.grad.at(i, j);
    }
    if (t.wants_grad({&t, ix})) {
      Tensor& gx = t.grad_buf(ix);
      for (int i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < m; ++j) {
          double dxh = nd.grad.at(i, j) * gv2[static_cast<size_t>(j)];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat[static_cast<size_t>(i) * m + j];
        }
        mean_dxhat /= m;
        mean_dxhat_xhat /= m;
        for (int j = 0; j < m; ++j) {
          double dxh = nd.grad.at(i, j) * gv2[static_cast<size_t>(j)];
          double xh = xhat[static_cast<size_t>(i) * m + j];
          gx.at(i, j) += inv_std[static_cast<size_t>(i)] * (dxh - mean_dxhat - xh * mean_dxhat_xhat);
        }
      }
    }
  };
  return r;
}

Value Tape::softmax_rows(Value x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 2) throw ContractError("softmax_rows: need a matrix");
  int n = xv.rows(), m = xv.cols();
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double hi = kNegInf;
    for (int j = 0; j < m; ++j) hi = std::max(hi, xv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      double e = std::exp(xv.at(i, j) - hi);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  Value r = emit(std::move(out), {x});
  int ix = x.idx;
  node(r.idx).backprop = [ix, n, m](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ix})) return;
    Tensor& g = t.grad_buf(ix);
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += nd.grad.at(i, j) * nd.value.at(i, j);
      for (int j = 0; j < m; ++j) g.at(i, j) += nd.value.at(i, j) * (nd.grad.at(i, j) - dot);
    }
  };
  return r;
}

Value Tape::log_softmax_rows(Value x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 2) throw ContractError("log_softmax_rows: need a matrix");
  int n = xv.rows(), m = xv.cols();
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double hi = kNegInf;
    for (int j = 0; j < m; ++j) hi = std::max(hi, xv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += std::exp(xv.at(i, j) - hi);
    double lse = hi + std::log(z);
    for (int j = 0; j < m; ++j) out.at(i, j) = xv.at(i, j) - lse;
  }
  Value r = emit(std::move(out), {x});
  int ix = x.idx;
  node(r.idx).backprop = [ix, n, m](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ix})) return;
    Tensor& g = t.grad_buf(ix);
    for (int i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < m; ++j) gsum += nd.grad.at(i, j);
      for (int j = 0; j < m; ++j) g.at(i, j) += nd.grad.at(i, j) - std::exp(nd.value.at(i, j)) * gsum;
    }
  };
  return r;
}

Value Tape::embedding_rows(Value table, const std::vector<int>& ids) {
  const Tensor& tv = table.val();
  if (tv.rank() != 2) throw ContractError("embedding_rows: table must be 2-D");
  int v = tv.rows(), d = tv.cols();
  int n = static_cast<int>(ids.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= v) {
      throw ContractError("embedding id out of range: " + std::to_string(ids[static_cast<size_t>(i)]) +
                          " for table with " + std::to_string(v) + " rows");
    }
    for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[static_cast<size_t>(i)], j);
  }
  Value r = emit(std::move(out), {table});
  int it = table.idx;
  node(r.idx).backprop = [it, ids, d](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, it})) return;
    Tensor& g = t.grad_buf(it);
    for (int i = 0; i < nd.value.rows(); ++i)
      for (int j = 0; j < d; ++j) g.at(ids[static_cast<size_t>(i)], j) += nd.grad.at(i, j);
  };
  return r;
}

namespace {

struct ConvGeom {
  int out, pad;
};

ConvGeom same_geom(int in, int k, int stride) {
  int out = (in + stride - 1) / stride;
  int pad_total = std::max((out - 1) * stride + k - in, 0);
  return {out, pad_total / 2};
}

}  // namespace

Value Tape::conv2d(Value x, Value kernel, Value bias, int stride_h, int stride_w) {
  const Tensor& xv = x.val();
  const Tensor& kv = kernel.val();
  const Tensor& bv = bias.val();
  if (xv.rank() != 3 || kv.rank() != 4 || bv.rank() != 1) throw ContractError("conv2d: bad ranks");
  int c_in = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  int c_out = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (kv.dim(1) != c_in || bv.dim(0) != c_out) {
    throw ContractError("conv2d: channel mismatch " + xv.shape_str() + " vs " + kv.shape_str());
  }
  auto [oh, pad_h] = same_geom(h, kh, stride_h);
  auto [ow, pad_w] = same_geom(w, kw, stride_w);

  Tensor out({c_out, oh, ow});
  auto xat = [&](int c, int i, int j) { return xv[(static_cast<size_t>(c) * h + i) * w + j]; };
  auto kat = [&](int co, int ci, int u, int v2) {
    return kv[((static_cast<size_t>(co) * c_in + ci) * kh + u) * kw + v2];
  };
  for (int co = 0; co < c_out; ++co) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double acc = bv[static_cast<size_t>(co)];
        for (int ci = 0; ci < c_in; ++ci) {
          for (int u = 0; u < kh; ++u) {
            int yi = i * stride_h + u - pad_h;
            if (yi < 0 || yi >= h) continue;
            for (int v2 = 0; v2 < kw; ++v2) {
              int xj = j * stride_w + v2 - pad_w;
              if (xj < 0 || xj >= w) continue;
              acc += xat(ci, yi, xj) * kat(co, ci, u, v2);
            }
          }
        }
        out[(static_cast<size_t>(co) * oh + i) * ow + j] = acc;
      }
    }
  }
  Value r = emit(std::move(out), {x, kernel, bias});
  int ix = x.idx, ik = kernel.idx, ib = bias.idx;
  node(r.idx).backprop = [=](Tape& t, Node& nd) {
    const Tensor& xv2 = t.node(ix).value;
    const Tensor& kv2 = t.node(ik).value;
    bool gx = t.wants_grad({&t, ix});
    bool gk = t.wants_grad({&t, ik});
    bool gb = t.wants_grad({&t, ib});
    Tensor* dgx = gx ? &t.grad_buf(ix) : nullptr;
    Tensor* dgk = gk ? &t.grad_buf(ik) : nullptr;
    Tensor* dgb = gb ? &t.grad_buf(ib) : nullptr;
    for (int co = 0; co < c_out; ++co) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          double g = nd.grad[(static_cast<size_t>(co) * oh + i) * ow + j];
          if (g == 0.0) continue;
          if (gb) (*dgb)[static_cast<size_t>(co)] += g;
          for (int ci = 0; ci < c_in; ++ci) {
            for (int u = 0; u < kh; ++u) {
              int yi = i * stride_h + u - pad_h;
              if (yi < 0 || yi >= h) continue;
              for (int v2 = 0; v2 < kw; ++v2) {
                int xj = j * stride_w + v2 - pad_w;
                if (xj < 0 || xj >= w) continue;
                std::size_t xoff = (static_cast<size_t>(ci) * h + yi) * w + xj;
                std::size_t koff = ((static_cast<size_t>(co) * c_in + ci) * kh + u) * kw + v2;
                if (gx) (*dgx)[xoff] += g * kv2[koff];
                if (gk) (*dgk)[koff] += g * xv2[xoff];
              }
            }
          }
        }
      }
    }
  };
  return r;
}

Value Tape::depthwise_conv1d(Value x, Value kernel) {
  const Tensor& xv = x.val();
  const Tensor& kv = kernel.val();
  if (xv.rank() != 2 || kv.rank() != 2 || kv.dim(1) != xv.cols() || kv.dim(0) % 2 == 0) {
    throw ContractError("depthwise_conv1d: need x (t,d), kernel (odd k,d)");
  }
  int t_len = xv.rows(), d = xv.cols(), k = kv.dim(0);
  int pad = (k - 1) / 2;
  Tensor out({t_len, d});
  for (int i = 0; i < t_len; ++i) {
    for (int u = 0; u < k; ++u) {
      int src = i + u - pad;
      if (src < 0 || src >= t_len) continue;
      for (int j = 0; j < d; ++j) out.at(i, j) += xv.at(src, j) * kv.at(u, j);
    }
  }
  Value r = emit(std::move(out), {x, kernel});
  int ix = x.idx, ik = kernel.idx;
  node(r.idx).backprop = [ix, ik, t_len, d, k, pad](Tape& t, Node& nd) {
    const Tensor& xv2 = t.node(ix).value;
    const Tensor& kv2 = t.node(ik).value;
    bool gx = t.wants_grad({&t, ix});
    bool gk = t.wants_grad({&t, ik});
    Tensor* dgx = gx ? &t.grad_buf(ix) : nullptr;
    Tensor* dgk = gk ? &t.grad_buf(ik) : nullptr;
    for (int i = 0; i < t_len; ++i) {
      for (int u = 0; u < k; ++u) {
        int src = i + u - pad;
        if (src < 0 || src >= t_len) continue;
        for (int j = 0; j < d; ++j) {
          double g = nd.grad.at(i, j);
          if (gx) dgx->at(src, j) += g * kv2.at(u, j);
          if (gk) dgk->at(u, j) += g * xv2.at(src, j);
        }
      }
    }
  };
  return r;
}

Value Tape::to_time_major(Value x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 3) throw ContractError("to_time_major: need (c,t,f)");
  int c = xv.dim(0), t_len = xv.dim(1), f = xv.dim(2);
  Tensor out({t_len, c * f});
  for (int ci = 0; ci < c; ++ci)
    for (int ti = 0; ti < t_len; ++ti)
      for (int fi = 0; fi < f; ++fi)
        out.at(ti, ci * f + fi) = xv[(static_cast<size_t>(ci) * t_len + ti) * f + fi];
  Value r = emit(std::move(out), {x});
  int ix = x.idx;
  node(r.idx).backprop = [ix, c, t_len, f](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ix})) return;
    Tensor& g = t.grad_buf(ix);
    for (int ci = 0; ci < c; ++ci)
      for (int ti = 0; ti < t_len; ++ti)
        for (int fi = 0; fi < f; ++fi)
          g[(static_cast<size_t>(ci) * t_len + ti) * f + fi] += nd.grad.at(ti, ci * f + fi);
  };
  return r;
}

namespace {

void check_label_args(const Tensor& m, const std::vector<int>& labels, const std::vector<bool>& valid,
                      const char* op) {
  if (m.rank() != 2) throw ContractError(std::string(op) + ": need a matrix");
  if (static_cast<int>(labels.size()) != m.rows() || valid.size() != labels.size()) {
    throw ContractError(std::string(op) + ": labels/valid length != rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (valid[i] && (labels[i] < 0 || labels[i] >= m.cols())) {
      throw ContractError(std::string(op) + ": label out of range: " + std::to_string(labels[i]));
    }
  }
}

}  // namespace

Value Tape::nll_sum(Value probs, const std::vector<int>& labels, const std::vector<bool>& valid) {
  const Tensor& pv = probs.val();
  check_label_args(pv, labels, valid, "nll_sum");
  double loss = 0.0;
  for (int i = 0; i < pv.rows(); ++i) {
    if (!valid[static_cast<size_t>(i)]) continue;
    loss -= std::log(std::max(pv.at(i, labels[static_cast<size_t>(i)]), kTinyProb));
  }
  Value r = emit(Tensor({1}, {loss}), {probs});
  int ip = probs.idx;
  node(r.idx).backprop = [ip, labels, valid](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ip})) return;
    const Tensor& pv2 = t.node(ip).value;
    Tensor& g = t.grad_buf(ip);
    double gl = nd.grad[0];
    for (int i = 0; i < pv2.rows(); ++i) {
      if (!valid[static_cast<size_t>(i)]) continue;
      int lab = labels[static_cast<size_t>(i)];
      g.at(i, lab) -= gl / std::max(pv2.at(i, lab), kTinyProb);
    }
  };
  return r;
}

Value Tape::ce_sum(Value logits, const std::vector<int>& labels, const std::vector<bool>& valid) {
  const Tensor& xv = logits.val();
  check_label_args(xv, labels, valid, "ce_sum");
  int n = xv.rows(), m = xv.cols();
  std::vector<double> lse(static_cast<size_t>(n));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double hi = kNegInf;
    for (int j = 0; j < m; ++j) hi = std::max(hi, xv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += std::exp(xv.at(i, j) - hi);
    lse[static_cast<size_t>(i)] = hi + std::log(z);
    if (valid[static_cast<size_t>(i)]) {
      loss += lse[static_cast<size_t>(i)] - xv.at(i, labels[static_cast<size_t>(i)]);
    }
  }
  Value r = emit(Tensor({1}, {loss}), {logits});
  int ix = logits.idx;
  node(r.idx).backprop = [ix, labels, valid, lse = std::move(lse), n, m](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, ix})) return;
    const Tensor& xv2 = t.node(ix).value;
    Tensor& g = t.grad_buf(ix);
    double gl = nd.grad[0];
    for (int i = 0; i < n; ++i) {
      if (!valid[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < m; ++j) {
        double soft = std::exp(xv2.at(i, j) - lse[static_cast<size_t>(i)]);
        double onehot = j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
        g.at(i, j) += gl * (soft - onehot);
      }
    }
  };
  return r;
}

Value Tape::ctc_nll(Value log_probs, const std::vector<int>& target) {
  const Tensor& lv = log_probs.val();
  if (lv.rank() != 2) throw ContractError("ctc_nll: need (t, classes) log-probs");
  const int t_len = lv.rows();
  const int classes = lv.cols();
  if (target.empty()) throw ContractError("ctc_nll: empty target");
  int repeats = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 1 || target[i] >= classes) {
      throw ContractError("ctc_nll: target class out of range: " + std::to_string(target[i]));
    }
    if (i > 0 && target[i] == target[i - 1]) ++repeats;
  }
  const int min_len = static_cast<int>(target.size()) + repeats;
  if (t_len < min_len) {
    throw InfeasibleTargetError("ctc target needs at least " + std::to_string(min_len) + " frames, got " +
                                std::to_string(t_len));
  }

  // Blank-augmented label sequence: blank, t1, blank, t2, ..., tU, blank.
  const int s_len = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(static_cast<size_t>(s_len), 0);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

  auto allow_skip = [&](int s) { return ext[static_cast<size_t>(s)] != 0 && s >= 2 && ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)]; };

  std::vector<double> alpha(static_cast<size_t>(t_len) * s_len, kNegInf);
  auto a = [&](int t, int s) -> double& { return alpha[static_cast<size_t>(t) * s_len + s]; };
  a(0, 0) = lv.at(0, ext[0]);
  if (s_len > 1) a(0, 1) = lv.at(0, ext[1]);
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double best = a(t - 1, s);
      if (s >= 1) best = log_sum_exp2(best, a(t - 1, s - 1));
      if (allow_skip(s)) best = log_sum_exp2(best, a(t - 1, s - 2));
      if (best == kNegInf) continue;
      a(t, s) = best + lv.at(t, ext[static_cast<size_t>(s)]);
    }
  }
  double log_p = log_sum_exp2(a(t_len - 1, s_len - 1), s_len >= 2 ? a(t_len - 1, s_len - 2) : kNegInf);
  double loss = -log_p;

  Value r = emit(Tensor({1}, {loss}), {log_probs});
  int il = log_probs.idx;
  node(r.idx).backprop = [il, ext, alpha = std::move(alpha), log_p, t_len, s_len](Tape& t, Node& nd) {
    if (!t.wants_grad({&t, il})) return;
    const Tensor& lv2 = t.node(il).value;
    auto a2 = [&](int ti, int s) { return alpha[static_cast<size_t>(ti) * s_len + s]; };
    auto allow_skip2 = [&](int s) {
      return ext[static_cast<size_t>(s)] != 0 && s >= 2 && ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)];
    };
    // Backward variable: beta[t][s] = log prob of completing the path from
    // (t, s), excluding the emission at t.
    std::vector<double> beta(static_cast<size_t>(t_len) * s_len, kNegInf);
    auto b = [&](int ti, int s) -> double& { return beta[static_cast<size_t>(ti) * s_len + s]; };
    b(t_len - 1, s_len - 1) = 0.0;
    if (s_len >= 2) b(t_len - 1, s_len - 2) = 0.0;
    for (int ti = t_len - 2; ti >= 0; --ti) {
      for (int s = 0; s < s_len; ++s) {
        double acc = b(ti + 1, s) + lv2.at(ti + 1, ext[static_cast<size_t>(s)]);
        if (s + 1 < s_len) acc = log_sum_exp2(acc, b(ti + 1, s + 1) + lv2.at(ti + 1, ext[static_cast<size_t>(s + 1)]));
        if (s + 2 < s_len && allow_skip2(s + 2)) {
          acc = log_sum_exp2(acc, b(ti + 1, s + 2) + lv2.at(ti + 1, ext[static_cast<size_t>(s + 2)]));
        }
        b(ti, s) = acc;
      }
    }
    Tensor& g = t.grad_buf(il);
    double gl = nd.grad[0];
    for (int ti = 0; ti < t_len; ++ti) {
      for (int s = 0; s < s_len; ++s) {
        double gamma = a2(ti, s) + b(ti, s);
        if (gamma == kNegInf) continue;
        // d(-log p)/d log_probs[ti, ext[s]] accumulates -exp(gamma - log p).
        g.at(ti, ext[static_cast<size_t>(s)]) -= gl * std::exp(gamma - log_p);
      }
    }
  };
  return r;
}

void Tape::backward(Value loss) {
  if (loss.tape != this || loss.idx < 0 || loss.idx >= static_cast<int>(nodes_.size())) {
    throw ContractError("backward called before any forward pass was recorded");
  }
  Node& ln = node(loss.idx);
  if (ln.value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + ln.value.shape_str());
  }
  grad_buf(loss.idx)[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& nd = node(i);
    if (!nd.grad_alloc) continue;
    if (nd.backprop && nd.requires_grad) nd.backprop(*this, nd);
    if (nd.bound != nullptr) {
      Tensor& pg = nd.bound->grad;
      for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += nd.grad[j];
      nd.bound_store->mark_grads_populated();
    }
  }
}

Value attention(Tape& t, Value q, Value k, Value v, const std::vector<bool>& key_valid) {
  const Tensor& qv = q.val();
  const Tensor& kv = k.val();
  const Tensor& vv = v.val();
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.cols() != kv.cols() || kv.rows() != vv.rows()) {
    throw ContractError("attention: incompatible shapes");
  }
  if (static_cast<int>(key_valid.size()) != kv.rows()) {
    throw ContractError("attention: mask length != key count");
  }
  if (std::none_of(key_valid.begin(), key_valid.end(), [](bool x) { return x; })) {
    throw ContractError("attention: every key position is masked");
  }
  Value scores = t.scale(t.matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(qv.cols())));
  if (!std::all_of(key_valid.begin(), key_valid.end(), [](bool x) { return x; })) {
    scores = t.mask_cols(scores, key_valid);
  }
  return t.matmul(t.softmax_rows(scores), v);
}

}  // namespace prosody
