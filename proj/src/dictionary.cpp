#include "primflow/dictionary.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace primflow::dict {

double soft_width(double phi, int K) {
  if (K < 2) throw std::invalid_argument("soft_width: K >= 2");
  return 1.0 + (K - 1) * primflow::sigmoid(phi);
}

std::vector<double> length_mask(double w, int K, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("length_mask: alpha > 0");
  std::vector<double> m(static_cast<size_t>(K));
  for (int s = 0; s < K; ++s) m[static_cast<size_t>(s)] = primflow::sigmoid(alpha * (w - s - 0.5));
  return m;
}

int round_width(double w) { return static_cast<int>(std::floor(w + 0.5)); }

EffectiveAtom effective_atom(const Atom& a, double alpha) {
  int K = static_cast<int>(a.content.dim(1));
  EffectiveAtom e;
  e.soft_w = soft_width(a.width_param, K);
  e.int_w = round_width(e.soft_w);
  e.mask = length_mask(e.soft_w, K, alpha);
  e.masked = a.content;
  for (int64_t c = 0; c < a.content.dim(0); ++c)
    for (int64_t s = 0; s < K; ++s) e.masked.at2(c, s) *= e.mask[static_cast<size_t>(s)];
  return e;
}

PlacementState sample_placements(const Tensor& logits, Rng& rng) {
  if (!logits.all_finite()) throw std::invalid_argument("sample_placements: non-finite logits");
  PlacementState st;
  st.logits = logits;
  st.probs = logits;
  for (double& x : st.probs.data) x = primflow::sigmoid(x);
  st.binary = st.probs;
  for (double& x : st.binary.data) x = rng.bernoulli(x) ? 1.0 : 0.0;
  return st;
}

namespace {

struct GateEvent {
  int atom;
  int onset;
  double p;
  double score;
};

struct GateWork {
  std::vector<GateEvent> events;
  std::vector<std::vector<int>> covering;        // per timestep: event ids
  std::vector<std::vector<double>> probs;        // per timestep: softmax over covering
  Tensor hard;                                   // M x L
  Tensor soft;                                   // M x L
};

GateWork gate_forward(const Tensor& R, const std::vector<int>& widths,
                      const std::vector<double>& gamma) {
  int64_t M = R.dim(0), L = R.dim(1);
  GateWork w;
  w.hard = Tensor({M, L});
  w.soft = Tensor({M, L});
  for (int64_t j = 0; j < M; ++j)
    for (int64_t k = 0; k < L; ++k) {
      double p = R.at2(j, k);
      if (p > kEventEps)
        w.events.push_back(GateEvent{static_cast<int>(j), static_cast<int>(k), p,
                                     p + gamma[static_cast<size_t>(j)]});
    }
  w.covering.assign(static_cast<size_t>(L), {});
  w.probs.assign(static_cast<size_t>(L), {});
  for (size_t e = 0; e < w.events.size(); ++e) {
    const GateEvent& ev = w.events[e];
    int64_t end = std::min<int64_t>(L, ev.onset + widths[static_cast<size_t>(ev.atom)]);
    for (int64_t t = ev.onset; t < end; ++t) w.covering[static_cast<size_t>(t)].push_back(static_cast<int>(e));
  }
  for (int64_t t = 0; t < L; ++t) {
    auto& cov = w.covering[static_cast<size_t>(t)];
    if (cov.empty()) continue;
    // softmax over scores, temperature 1
    double mx = -HUGE_VAL;
    for (int e : cov) mx = std::max(mx, w.events[static_cast<size_t>(e)].score);
    double z = 0.0;
    auto& pr = w.probs[static_cast<size_t>(t)];
    pr.resize(cov.size());
    for (size_t i = 0; i < cov.size(); ++i) {
      pr[i] = std::exp(w.events[static_cast<size_t>(cov[i])].score - mx);
      z += pr[i];
    }
    int best = cov[0];
    for (size_t i = 0; i < cov.size(); ++i) {
      pr[i] /= z;
      const GateEvent& ev = w.events[static_cast<size_t>(cov[i])];
      const GateEvent& bv = w.events[static_cast<size_t>(best)];
      if (ev.score > bv.score ||
          (ev.score == bv.score &&
           (ev.atom < bv.atom || (ev.atom == bv.atom && ev.onset < bv.onset))))
        best = cov[i];
      w.soft.at2(ev.atom, t) += pr[i];
    }
    w.hard.at2(w.events[static_cast<size_t>(best)].atom, t) = 1.0;
  }
  return w;
}

}  // namespace

Tensor wta_gate(const Tensor& R, const std::vector<int>& widths, const std::vector<double>& gamma) {
  return gate_forward(R, widths, gamma).hard;
}

Tensor synthesize(const std::vector<Tensor>& masked_atoms, const std::vector<int>& widths,
                  const Tensor& R, const Tensor& gate) {
  int64_t M = R.dim(0), L = R.dim(1);
  int64_t C = masked_atoms.at(0).dim(0);
  Tensor out({C, L});
  for (int64_t j = 0; j < M; ++j) {
    const Tensor& atom = masked_atoms[static_cast<size_t>(j)];
    int wj = widths[static_cast<size_t>(j)];
    for (int64_t k = 0; k < L; ++k) {
      double r = R.at2(j, k);
      if (r == 0.0) continue;
      int64_t end = std::min<int64_t>(L, k + wj);
      for (int64_t t = k; t < end; ++t) {
        double g = gate.at2(j, t);
        if (g == 0.0) continue;
        for (int64_t c = 0; c < C; ++c) out.at2(c, t) += g * r * atom.at2(c, t - k);
      }
    }
  }
  return out;
}

Tensor synthesize(const Tensor& masked_atoms, const std::vector<int>& widths, const Tensor& R,
                  const Tensor& gate) {
  int64_t M = masked_atoms.dim(0), C = masked_atoms.dim(1), K = masked_atoms.dim(2);
  std::vector<Tensor> split;
  split.reserve(static_cast<size_t>(M));
  for (int64_t j = 0; j < M; ++j) {
    Tensor a({C, K});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < K; ++s) a.at2(c, s) = masked_atoms.at3(j, c, s);
    split.push_back(std::move(a));
  }
  return synthesize(split, widths, R, gate);
}

BuiltAtoms build_effective_atoms(ad::Tape& t, ad::Val content, ad::Val phi, double alpha,
                                 bool use_mask) {
  const Tensor& cv = t.val(content);
  if (cv.rank() != 3) throw std::invalid_argument("build_effective_atoms: content rank 3");
  int64_t M = cv.dim(0), K = cv.dim(2);

  BuiltAtoms out;
  if (!use_mask) {
    out.wsoft = t.constant(Tensor::full({M}, static_cast<double>(K)), "wsoft_fixed");
    out.masked = content;
    out.widths.assign(static_cast<size_t>(M), static_cast<int>(K));
    return out;
  }

  // w = 1 + (K-1) * sigmoid(phi)
  out.wsoft = t.add_const(t.scale(t.sigmoid(phi), static_cast<double>(K - 1)), 1.0);
  for (int64_t j = 0; j < M; ++j) {
    int w = round_width(t.val(out.wsoft)[j]);
    out.widths.push_back(std::max(1, std::min<int>(static_cast<int>(K), w)));
  }

  // mask[j,s] = sigmoid(alpha * (w_j - s - 1/2))
  Tensor onesK = Tensor::full({1, K}, 1.0);
  ad::Val wcol = t.reshape(out.wsoft, {M, 1});
  ad::Val wgrid = t.matmul(wcol, t.constant(onesK, "ones"));
  Tensor offs({K});
  for (int64_t s = 0; s < K; ++s) offs[s] = -(static_cast<double>(s) + 0.5);
  ad::Val arg = t.scale(t.add_rowvec(wgrid, t.constant(offs, "s_offsets")), alpha);
  ad::Val mask = t.sigmoid(arg);  // (M, K)

  // masked[j,c,s] = content[j,c,s] * mask[j,s]
  const Tensor& mv = t.val(mask);
  int64_t C = cv.dim(1);
  Tensor prod({M, C, K});
  for (int64_t j = 0; j < M; ++j)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < K; ++s) prod.at3(j, c, s) = cv.at3(j, c, s) * mv.at2(j, s);
  out.masked = t.make(std::move(prod), [content, mask, M, C, K, o = t.size()](ad::Tape& tp) {
    const Tensor& g = tp.grad(ad::Val{static_cast<int32_t>(o)});
    const Tensor& cv = tp.val(content);
    const Tensor& mv = tp.val(mask);
    Tensor& gc = tp.grad_mut(content);
    Tensor& gm = tp.grad_mut(mask);
    for (int64_t j = 0; j < M; ++j)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t s = 0; s < K; ++s) {
          double gv = g.at3(j, c, s);
          gc.at3(j, c, s) += gv * mv.at2(j, s);
          gm.at2(j, s) += gv * cv.at3(j, c, s);
        }
  }, "atom_mask");
  return out;
}

ad::Val wta_gate_node(ad::Tape& t, ad::Val R, ad::Val gamma, const std::vector<int>& widths,
                      EvalMode mode) {
  const Tensor& rv = t.val(R);
  const Tensor& gv = t.val(gamma);
  std::vector<double> gvec(gv.data.begin(), gv.data.end());
  auto work = std::make_shared<GateWork>(gate_forward(rv, widths, gvec));
  Tensor value = (mode == EvalMode::Hard) ? work->hard : work->soft;
  int64_t L = rv.dim(1);
  return t.make(std::move(value), [R, gamma, work, L, o = t.size()](ad::Tape& tp) {
    const Tensor& g = tp.grad(ad::Val{static_cast<int32_t>(o)});
    Tensor& gr = tp.grad_mut(R);
    Tensor& gg = tp.grad_mut(gamma);
    for (int64_t tt = 0; tt < L; ++tt) {
      const auto& cov = work->covering[static_cast<size_t>(tt)];
      if (cov.empty()) continue;
      const auto& pr = work->probs[static_cast<size_t>(tt)];
      double dot = 0.0;
      for (size_t i = 0; i < cov.size(); ++i) {
        const GateEvent& ev = work->events[static_cast<size_t>(cov[i])];
        dot += pr[i] * g.at2(ev.atom, tt);
      }
      for (size_t i = 0; i < cov.size(); ++i) {
        const GateEvent& ev = work->events[static_cast<size_t>(cov[i])];
        double ds = pr[i] * (g.at2(ev.atom, tt) - dot);
        gr.at2(ev.atom, ev.onset) += ds;
        gg[ev.atom] += ds;
      }
    }
  }, "wta_gate");
}

ad::Val synthesize_node(ad::Tape& t, ad::Val masked, ad::Val R, ad::Val gate,
                        const std::vector<int>& widths) {
  const Tensor& dv = t.val(masked);
  const Tensor& rv = t.val(R);
  const Tensor& gv = t.val(gate);
  int64_t M = rv.dim(0), L = rv.dim(1), C = dv.dim(1);
  if (dv.dim(0) != M || !gv.same_shape(rv))
    throw std::invalid_argument("synthesize: shape mismatch");

  // per-atom convolution kept for the gate backward
  auto conv = std::make_shared<Tensor>(Tensor({M, C, L}));
  for (int64_t j = 0; j < M; ++j) {
    int wj = widths[static_cast<size_t>(j)];
    for (int64_t k = 0; k < L; ++k) {
      double r = rv.at2(j, k);
      if (r == 0.0) continue;
      int64_t end = std::min<int64_t>(L, k + wj);
      for (int64_t tt = k; tt < end; ++tt)
        for (int64_t c = 0; c < C; ++c) conv->at3(j, c, tt) += r * dv.at3(j, c, tt - k);
    }
  }
  Tensor out({C, L});
  for (int64_t j = 0; j < M; ++j)
    for (int64_t tt = 0; tt < L; ++tt) {
      double g = gv.at2(j, tt);
      if (g == 0.0) continue;
      for (int64_t c = 0; c < C; ++c) out.at2(c, tt) += g * conv->at3(j, c, tt);
    }

  auto w = std::make_shared<std::vector<int>>(widths);
  return t.make(std::move(out), [masked, R, gate, conv, w, M, C, L, o = t.size()](ad::Tape& tp) {
    const Tensor& g = tp.grad(ad::Val{static_cast<int32_t>(o)});  // C x L
    const Tensor& dv = tp.val(masked);
    const Tensor& rv = tp.val(R);
    const Tensor& gv = tp.val(gate);
    Tensor& gd = tp.grad_mut(masked);
    Tensor& gr = tp.grad_mut(R);
    Tensor& gg = tp.grad_mut(gate);
    for (int64_t j = 0; j < M; ++j) {
      int wj = (*w)[static_cast<size_t>(j)];
      for (int64_t tt = 0; tt < L; ++tt) {
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) s += g.at2(c, tt) * conv->at3(j, c, tt);
        gg.at2(j, tt) += s;
      }
      for (int64_t k = 0; k < L; ++k) {
        int64_t end = std::min<int64_t>(L, k + wj);
        double dr = 0.0;
        double r = rv.at2(j, k);
        for (int64_t tt = k; tt < end; ++tt) {
          double gj = gv.at2(j, tt);
          if (gj == 0.0) continue;
          for (int64_t c = 0; c < C; ++c) {
            double gout = g.at2(c, tt) * gj;
            dr += gout * dv.at3(j, c, tt - k);
            if (r != 0.0) gd.at3(j, c, tt - k) += gout * r;
          }
        }
        gr.at2(j, k) += dr;
      }
    }
  }, "synthesize");
}

}  // namespace primflow::dict
