#include "primflow/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace primflow::flow {

FlowState interpolate(const Tensor& Z0, const Tensor& R1, double t, double sigma) {
  if (!Z0.same_shape(R1)) throw std::invalid_argument("interpolate: shape mismatch");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate: t in [0,1]");
  FlowState st;
  st.Z0 = Z0;
  st.t = t;
  st.sigma = sigma;
  st.Zt = Z0;
  st.target_vel = R1;
  for (int64_t i = 0; i < Z0.numel(); ++i) {
    st.Zt[i] = (1.0 - t) * Z0[i] + t * R1[i];
    st.target_vel[i] = R1[i] - Z0[i];
  }
  return st;
}

Tensor endpoint_estimate(const Tensor& Zt, double t, const Tensor& v) {
  if (!Zt.same_shape(v)) throw std::invalid_argument("endpoint_estimate: shape mismatch");
  if (t >= 1.0) return Zt;
  Tensor out = Zt;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += (1.0 - t) * v[i];
  return out;
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double g) {
  if (!v_cond.same_shape(v_uncond)) throw std::invalid_argument("cfg_combine: shape mismatch");
  Tensor out = v_uncond;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += g * (v_cond[i] - v_uncond[i]);
  return out;
}

Tensor binarize(const Tensor& Z1, double threshold) {
  Tensor out = Z1;
  for (double& x : out.data) x = (x >= threshold) ? 1.0 : 0.0;
  return out;
}

namespace {

constexpr int kFeat = 16;  // sinusoidal feature width for t and w embeddings

Tensor time_features(double t) {
  Tensor f({1, kFeat});
  for (int i = 0; i < kFeat / 2; ++i) {
    double freq = M_PI * static_cast<double>(1 << i);
    f[2 * i] = std::sin(t * freq);
    f[2 * i + 1] = std::cos(t * freq);
  }
  return f;
}

Tensor pos_encoding(int64_t T, int64_t d) {
  Tensor pe({T, d});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t i = 0; i < d; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe.at2(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  return pe;
}

ad::Val linear(ad::Tape& t, ad::Val x, ad::Val w, ad::Val b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

// (M,16) sinusoidal embedding of the soft widths; smooth in w.
ad::Val width_features(ad::Tape& t, ad::Val wsoft) {
  int64_t M = t.val(wsoft).numel();
  Tensor freqs({1, kFeat / 2});
  for (int i = 0; i < kFeat / 2; ++i) freqs[i] = M_PI / static_cast<double>(1 << i);
  ad::Val grid = t.matmul(t.reshape(wsoft, {M, 1}), t.constant(freqs, "w_freqs"));
  return t.concat_cols({t.sin_(grid), t.cos_(grid)});
}

}  // namespace

void init_net_params(ParamStore& store, const NetConfig& cfg, Rng& rng) {
  auto dense = [&](const std::string& name, int64_t in, int64_t out) {
    store.add(name, rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  };
  int64_t d = cfg.d, L = cfg.L;
  dense("net.in_w", L, d);
  store.add("net.in_b", Tensor({d}));
  dense("net.psi_w", kFeat, d);
  store.add("net.psi_b", Tensor({d}));
  dense("net.t_w1", kFeat, d);
  store.add("net.t_b1", Tensor({d}));
  dense("net.t_w2", d, d);
  store.add("net.t_b2", Tensor({d}));
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string p = "net.b" + std::to_string(b) + ".";
    for (const char* n : {"wq", "wk", "wv", "wo"}) dense(p + n, d, d);
    for (const char* n : {"bq", "bk", "bv", "bo"}) store.add(p + n, Tensor({d}));
    dense(p + "m_w1", d, 4 * d);
    store.add(p + "m_b1", Tensor({4 * d}));
    dense(p + "m_w2", 4 * d, d);
    store.add(p + "m_b2", Tensor({d}));
    store.add(p + "ada_w", Tensor({d, 4 * d}));  // zero: identity modulation at init
    store.add(p + "ada_b", Tensor({4 * d}));
  }
  store.add("net.out_w", Tensor({d, L}));  // zero: the field starts at v = 0
  store.add("net.out_b", Tensor({L}));
  dense("enc.point_w", cfg.C, d);
  store.add("enc.point_b", Tensor({d}));
  if (cfg.n_tasks > 0) store.add("enc.task_emb", rng.normal_tensor({cfg.n_tasks, d}, 0.1));
  store.add("null_ctx", rng.normal_tensor({d}, 0.1));
}

ad::Val velocity_forward(ad::Tape& t, const LeafMap& p, const NetConfig& cfg, ad::Val Zt,
                         double time, ad::Val wsoft, ad::Val h) {
  const Tensor& zv = t.val(Zt);
  if (zv.rank() != 2 || zv.dim(0) != cfg.tokens || zv.dim(1) != cfg.L)
    throw std::invalid_argument("velocity_forward: Zt must be tokens x L, got " + zv.shape_str());
  if (t.val(wsoft).numel() != cfg.tokens)
    throw std::invalid_argument("velocity_forward: widths/tokens mismatch");
  int64_t d = cfg.d;
  int64_t dh = d / cfg.heads;

  ad::Val X = linear(t, Zt, p.at("net.in_w"), p.at("net.in_b"));
  X = t.add(X, linear(t, width_features(t, wsoft), p.at("net.psi_w"), p.at("net.psi_b")));
  ad::Val te = linear(t, t.constant(time_features(time), "t_feat"), p.at("net.t_w1"), p.at("net.t_b1"));
  te = linear(t, t.silu(te), p.at("net.t_w2"), p.at("net.t_b2"));
  X = t.add_rowvec(X, t.reshape(te, {d}));

  ad::Val hrow = t.reshape(h, {1, d});
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string pre = "net.b" + std::to_string(b) + ".";
    ad::Val ada = linear(t, hrow, p.at(pre + "ada_w"), p.at(pre + "ada_b"));
    auto mod = [&](ad::Val x, int64_t which) {
      ad::Val sc = t.reshape(t.slice_cols(ada, which * 2 * d, d), {d});
      ad::Val sh = t.reshape(t.slice_cols(ada, which * 2 * d + d, d), {d});
      return t.add_rowvec(t.mul_rowvec(x, t.add_const(sc, 1.0)), sh);
    };
    ad::Val Y = mod(t.layer_norm(X), 0);
    ad::Val Q = linear(t, Y, p.at(pre + "wq"), p.at(pre + "bq"));
    ad::Val K = linear(t, Y, p.at(pre + "wk"), p.at(pre + "bk"));
    ad::Val V = linear(t, Y, p.at(pre + "wv"), p.at(pre + "bv"));
    std::vector<ad::Val> heads;
    for (int hh = 0; hh < cfg.heads; ++hh) {
      ad::Val qh = t.slice_cols(Q, hh * dh, dh);
      ad::Val kh = t.slice_cols(K, hh * dh, dh);
      ad::Val vh = t.slice_cols(V, hh * dh, dh);
      ad::Val scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
      heads.push_back(t.matmul(t.row_softmax(scores), vh));
    }
    ad::Val A = linear(t, t.concat_cols(heads), p.at(pre + "wo"), p.at(pre + "bo"));
    X = t.add(X, A);
    ad::Val Y2 = mod(t.layer_norm(X), 1);
    ad::Val H1 = t.silu(linear(t, Y2, p.at(pre + "m_w1"), p.at(pre + "m_b1")));
    X = t.add(X, linear(t, H1, p.at(pre + "m_w2"), p.at(pre + "m_b2")));
  }
  return linear(t, t.layer_norm(X), p.at("net.out_w"), p.at("net.out_b"));
}

ad::Val encode_context_node(ad::Tape& t, const LeafMap& p, const NetConfig& cfg,
                            const Tensor& prefix, int task_id) {
  if (prefix.rank() != 2 || prefix.dim(1) < 1)
    throw std::invalid_argument("encode_context: prefix must be C x T_obs");
  int64_t C = prefix.dim(0), T = prefix.dim(1), d = cfg.d;
  Tensor pt({T, C});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t tt = 0; tt < T; ++tt) pt.at2(tt, c) = prefix.at2(c, tt);
  ad::Val X = linear(t, t.constant(std::move(pt), "prefix"), p.at("enc.point_w"), p.at("enc.point_b"));
  X = t.add(X, t.constant(pos_encoding(T, d), "posenc"));
  Tensor pool = Tensor::full({1, T}, 1.0 / static_cast<double>(T));
  ad::Val h = t.reshape(t.matmul(t.constant(pool, "pool"), X), {d});
  if (task_id >= 0) {
    if (cfg.n_tasks <= task_id) throw std::invalid_argument("encode_context: task id out of range");
    h = t.add(h, t.reshape(t.slice_rows(p.at("enc.task_emb"), task_id, 1), {d}));
  }
  return h;
}

ad::Val null_context_node(ad::Tape& t, const LeafMap& p) {
  return t.reshape(p.at("null_ctx"), {t.val(p.at("null_ctx")).numel()});
}

Tensor encode_context(const ParamStore& store, const NetConfig& cfg, const Tensor& prefix,
                      int task_id) {
  ad::Tape t;
  LeafMap p = leaf_all(t, store);
  return t.val(encode_context_node(t, p, cfg, prefix, task_id));
}

Tensor integrate_field(const FieldFn& field, const Tensor& Z0, int steps) {
  if (steps < 1) throw std::invalid_argument("integrate: steps >= 1");
  Tensor Z = Z0;
  double dt = 1.0 / static_cast<double>(steps);
  for (int i = 0; i < steps; ++i) {
    Tensor v = field(Z, static_cast<double>(i) * dt);
    for (int64_t k = 0; k < Z.numel(); ++k) Z[k] += dt * v[k];
    if (!Z.all_finite())
      throw std::runtime_error("integration failure: non-finite state at step " + std::to_string(i));
  }
  return Z;
}

Tensor integrate(const Sampler& s, const Tensor& Z0, int steps, const Tensor* h_cond, double g) {
  Tensor wt({static_cast<int64_t>(s.wsoft.size())});
  for (size_t i = 0; i < s.wsoft.size(); ++i) wt[static_cast<int64_t>(i)] = s.wsoft[i];
  FieldFn field = [&](const Tensor& Z, double time) -> Tensor {
    ad::Tape t;
    LeafMap p = leaf_all(t, *s.params);
    ad::Val zt = t.constant(Z, "Zt");
    ad::Val w = t.constant(wt, "wsoft");
    if (h_cond == nullptr)
      return t.val(velocity_forward(t, p, s.cfg, zt, time, w, null_context_node(t, p)));
    ad::Val h = t.constant(*h_cond, "h");
    if (g == 1.0) return t.val(velocity_forward(t, p, s.cfg, zt, time, w, h));
    Tensor vc = t.val(velocity_forward(t, p, s.cfg, zt, time, w, h));
    Tensor vu = t.val(velocity_forward(t, p, s.cfg, zt, time, w, null_context_node(t, p)));
    return cfg_combine(vc, vu, g);
  };
  return integrate_field(field, Z0, steps);
}

}  // namespace primflow::flow
