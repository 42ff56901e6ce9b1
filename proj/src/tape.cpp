#include "primflow/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace primflow::ad {

namespace {

void gemm_nn(const double* a, const double* b, double* out, int64_t m, int64_t k, int64_t n) {
  // out (m x n) += is not wanted here; caller zeroes. ikj order for locality.
  for (int64_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* out, int64_t m, int64_t k, int64_t n) {
  // a (m x k), b (n x k), out (m x n) += a * b^T
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      orow[j] += s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* out, int64_t m, int64_t k, int64_t n) {
  // a (k x m), b (k x n), out (m x n) += a^T * b
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Val Tape::push(Tensor v, Backward b, const char* tag) {
  nodes_.push_back(Node{std::move(v), Tensor{}, tag, std::move(b)});
  return Val{static_cast<int32_t>(nodes_.size() - 1)};
}

Val Tape::leaf(Tensor v, const char* tag) { return push(std::move(v), nullptr, tag); }

Val Tape::add(Val a, Val b) {
  const Tensor &va = val(a), &vb = val(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = va;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
  return push(std::move(out), [a, b, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor &ga = t.grad_mut(a), &gb = t.grad_mut(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  }, "add");
}

Val Tape::sub(Val a, Val b) {
  const Tensor &va = val(a), &vb = val(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = va;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
  return push(std::move(out), [a, b, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor &ga = t.grad_mut(a), &gb = t.grad_mut(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  }, "sub");
}

Val Tape::mul(Val a, Val b) {
  const Tensor &va = val(a), &vb = val(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = va;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
  return push(std::move(out), [a, b, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor &va = t.val(a), &vb = t.val(b);
    Tensor &ga = t.grad_mut(a), &gb = t.grad_mut(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  }, "mul");
}

Val Tape::scale(Val a, double c) {
  Tensor out = val(a);
  for (double& x : out.data) x *= c;
  return push(std::move(out), [a, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
  }, "scale");
}

Val Tape::add_const(Val a, double c) {
  Tensor out = val(a);
  for (double& x : out.data) x += c;
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }, "add_const");
}

Val Tape::sigmoid(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = primflow::sigmoid(x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& y = t.nodes_[o].v;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  }, "sigmoid");
}

Val Tape::exp_(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::exp(x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& y = t.nodes_[o].v;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
  }, "exp");
}

Val Tape::softplus(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = primflow::softplus(x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * primflow::sigmoid(x[i]);
  }, "softplus");
}

Val Tape::sin_(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::sin(x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * std::cos(x[i]);
  }, "sin");
}

Val Tape::cos_(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::cos(x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] -= g[i] * std::sin(x[i]);
  }, "cos");
}

Val Tape::clamp01(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0 && x[i] < 1.0) ga[i] += g[i];
  }, "clamp01");
}

Val Tape::sum(Val a) {
  double s = 0.0;
  for (double x : val(a).data) s += x;
  return push(Tensor::scalar(s), [a, o = size()](Tape& t) {
    double g0 = t.nodes_[o].g[0];
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g0;
  }, "sum");
}

Val Tape::mean(Val a) {
  const Tensor& va = val(a);
  double s = 0.0;
  for (double x : va.data) s += x;
  double n = static_cast<double>(va.numel());
  return push(Tensor::scalar(s / n), [a, n, o = size()](Tape& t) {
    double g0 = t.nodes_[o].g[0] / n;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g0;
  }, "mean");
}

Val Tape::sq_norm(Val a) {
  double s = 0.0;
  for (double x : val(a).data) s += x * x;
  return push(Tensor::scalar(s), [a, o = size()](Tape& t) {
    double g0 = t.nodes_[o].g[0];
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < x.numel(); ++i) ga[i] += 2.0 * g0 * x[i];
  }, "sq_norm");
}

Val Tape::matmul(Val a, Val b) {
  const Tensor &va = val(a), &vb = val(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + va.shape_str() + " x " + vb.shape_str());
  int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  gemm_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
  return push(std::move(out), [a, b, m, k, n, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor &va = t.val(a), &vb = t.val(b);
    gemm_nt(g.data.data(), vb.data.data(), t.grad_mut(a).data.data(), m, n, k);
    gemm_tn(va.data.data(), g.data.data(), t.grad_mut(b).data.data(), k, m, n);
  }, "matmul");
}

Val Tape::transpose(Val a) {
  const Tensor& va = val(a);
  if (va.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  int64_t r = va.dim(0), c = va.dim(1);
  Tensor out({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(j, i) = va.at2(i, j);
  return push(std::move(out), [a, r, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) ga.at2(i, j) += g.at2(j, i);
  }, "transpose");
}

Val Tape::row_softmax(Val a) {
  const Tensor& va = val(a);
  if (va.rank() != 2) throw std::invalid_argument("row_softmax: rank-2 only");
  int64_t r = va.dim(0), c = va.dim(1);
  Tensor out({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double mx = -HUGE_VAL;
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, va.at2(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(va.at2(i, j) - mx);
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = std::exp(va.at2(i, j) - mx) / z;
  }
  return push(std::move(out), [a, r, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& p = t.nodes_[o].v;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += g.at2(i, j) * p.at2(i, j);
      for (int64_t j = 0; j < c; ++j) ga.at2(i, j) += p.at2(i, j) * (g.at2(i, j) - dot);
    }
  }, "row_softmax");
}

Val Tape::layer_norm(Val a, double eps) {
  const Tensor& va = val(a);
  if (va.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 only");
  int64_t r = va.dim(0), c = va.dim(1);
  Tensor out({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += va.at2(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double d = va.at2(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = (va.at2(i, j) - mu) * inv;
  }
  return push(std::move(out), [a, r, c, eps, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor& y = t.nodes_[o].v;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < r; ++i) {
      double mu = 0.0;
      for (int64_t j = 0; j < c; ++j) mu += x.at2(i, j);
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        double d = x.at2(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      double inv = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        m1 += g.at2(i, j);
        m2 += g.at2(i, j) * y.at2(i, j);
      }
      m1 /= static_cast<double>(c);
      m2 /= static_cast<double>(c);
      for (int64_t j = 0; j < c; ++j)
        ga.at2(i, j) += inv * (g.at2(i, j) - m1 - y.at2(i, j) * m2);
    }
  }, "layer_norm");
}

Val Tape::mul_rowvec(Val x, Val v) {
  const Tensor &vx = val(x), &vv = val(v);
  if (vx.rank() != 2 || vv.numel() != vx.dim(1))
    throw std::invalid_argument("mul_rowvec: shape mismatch");
  int64_t r = vx.dim(0), c = vx.dim(1);
  Tensor out({r, c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = vx.at2(i, j) * vv[j];
  return push(std::move(out), [x, v, r, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor &vx = t.val(x), &vv = t.val(v);
    Tensor &gx = t.grad_mut(x), &gv = t.grad_mut(v);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) {
        gx.at2(i, j) += g.at2(i, j) * vv[j];
        gv[j] += g.at2(i, j) * vx.at2(i, j);
      }
  }, "mul_rowvec");
}

Val Tape::add_rowvec(Val x, Val v) {
  const Tensor &vx = val(x), &vv = val(v);
  if (vx.rank() != 2 || vv.numel() != vx.dim(1))
    throw std::invalid_argument("add_rowvec: shape mismatch");
  int64_t r = vx.dim(0), c = vx.dim(1);
  Tensor out = vx;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) += vv[j];
  return push(std::move(out), [x, v, r, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor &gx = t.grad_mut(x), &gv = t.grad_mut(v);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) {
        gx.at2(i, j) += g.at2(i, j);
        gv[j] += g.at2(i, j);
      }
  }, "add_rowvec");
}

Val Tape::mul_colvec(Val x, Val u) {
  const Tensor &vx = val(x), &vu = val(u);
  if (vx.rank() != 2 || vu.numel() != vx.dim(0))
    throw std::invalid_argument("mul_colvec: shape mismatch");
  int64_t r = vx.dim(0), c = vx.dim(1);
  Tensor out({r, c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = vx.at2(i, j) * vu[i];
  return push(std::move(out), [x, u, r, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    const Tensor &vx = t.val(x), &vu = t.val(u);
    Tensor &gx = t.grad_mut(x), &gu = t.grad_mut(u);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) {
        gx.at2(i, j) += g.at2(i, j) * vu[i];
        gu[i] += g.at2(i, j) * vx.at2(i, j);
      }
  }, "mul_colvec");
}

Val Tape::slice_cols(Val a, int64_t c0, int64_t n) {
  const Tensor& va = val(a);
  if (va.rank() != 2 || c0 < 0 || c0 + n > va.dim(1))
    throw std::invalid_argument("slice_cols: out of range");
  int64_t r = va.dim(0);
  Tensor out({r, n});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < n; ++j) out.at2(i, j) = va.at2(i, c0 + j);
  return push(std::move(out), [a, c0, n, r, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < n; ++j) ga.at2(i, c0 + j) += g.at2(i, j);
  }, "slice_cols");
}

Val Tape::slice_rows(Val a, int64_t r0, int64_t n) {
  const Tensor& va = val(a);
  if (va.rank() != 2 || r0 < 0 || r0 + n > va.dim(0))
    throw std::invalid_argument("slice_rows: out of range");
  int64_t c = va.dim(1);
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = va.at2(r0 + i, j);
  return push(std::move(out), [a, r0, n, c, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < c; ++j) ga.at2(r0 + i, j) += g.at2(i, j);
  }, "slice_rows");
}

Val Tape::concat_cols(const std::vector<Val>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int64_t r = val(parts[0]).dim(0), total = 0;
  for (Val p : parts) {
    const Tensor& vp = val(p);
    if (vp.rank() != 2 || vp.dim(0) != r) throw std::invalid_argument("concat_cols: shape mismatch");
    total += vp.dim(1);
  }
  Tensor out({r, total});
  int64_t off = 0;
  for (Val p : parts) {
    const Tensor& vp = val(p);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < vp.dim(1); ++j) out.at2(i, off + j) = vp.at2(i, j);
    off += vp.dim(1);
  }
  return push(std::move(out), [parts, r, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    int64_t off = 0;
    for (Val p : parts) {
      Tensor& gp = t.grad_mut(p);
      int64_t c = gp.dim(1);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) gp.at2(i, j) += g.at2(i, off + j);
      off += c;
    }
  }, "concat_cols");
}

Val Tape::reshape(Val a, std::vector<int64_t> shape) {
  const Tensor& va = val(a);
  if (Tensor::numel_of(shape) != va.numel()) throw std::invalid_argument("reshape: numel mismatch");
  Tensor out(std::move(shape), va.data);
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }, "reshape");
}

Val Tape::stopgrad(Val a) {
  return push(val(a), nullptr, "stopgrad");
}

Val Tape::st_round(Val a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::floor(x + 0.5);  // ties round up
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }, "st_round");
}

Val Tape::st_bernoulli(Val a, Rng& rng) {
  Tensor out = val(a);
  for (double& x : out.data) x = rng.bernoulli(x) ? 1.0 : 0.0;
  return push(std::move(out), [a, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }, "st_bernoulli");
}

Val Tape::st_to(Val soft, Tensor hard, const char* tag) {
  if (!val(soft).same_shape(hard)) throw std::invalid_argument("st_to: shape mismatch");
  return push(std::move(hard), [soft, o = size()](Tape& t) {
    const Tensor& g = t.nodes_[o].g;
    Tensor& gs = t.grad_mut(soft);
    for (int64_t i = 0; i < g.numel(); ++i) gs[i] += g[i];
  }, tag);
}

Val Tape::make(Tensor out, Backward back, const char* tag) {
  return push(std::move(out), std::move(back), tag);
}

void Tape::backward(Val root) {
  if (!root.ok() || val(root).numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  for (auto& n : nodes_) n.g = Tensor::zeros(n.v.shape);
  nodes_[static_cast<size_t>(root.i)].g[0] = 1.0;
  for (int32_t i = root.i; i >= 0; --i) {
    auto& n = nodes_[static_cast<size_t>(i)];
    if (n.back) n.back(*this);
  }
}

int32_t Tape::first_nonfinite() const {
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (!nodes_[i].v.all_finite()) return static_cast<int32_t>(i);
  return -1;
}

}  // namespace primflow::ad
