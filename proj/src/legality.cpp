#include "primflow/legality.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace primflow::legal {

namespace {

struct Ev {
  int j, k;
  double p;
};

// Onset-major scan keeps events sorted by (onset, atom).
std::vector<Ev> raw_events(const Tensor& R) {
  std::vector<Ev> evs;
  int64_t M = R.dim(0), L = R.dim(1);
  for (int64_t k = 0; k < L; ++k)
    for (int64_t j = 0; j < M; ++j)
      if (R.at2(j, k) > dict::kEventEps)
        evs.push_back(Ev{static_cast<int>(j), static_cast<int>(k), R.at2(j, k)});
  return evs;
}

struct PairCost {
  double cost = 0;
  double dws_a = 0, dws_b = 0;  // d cost / d soft width (gap + overlap terms)
};

// a precedes b in onset order (k_a <= k_b). In Hard mode the gap and overlap
// take their exact integer values and the soft expressions only shape the
// backward; in Relaxed mode the soft expressions are the values themselves.
PairCost pair_cost_core(const Tensor& masked, int ja, int ka, int wa_i, double wa_s, int jb,
                        int kb, int wb_i, double wb_s, const GeoParams& gp, EvalMode mode) {
  PairCost pc;
  int64_t C = masked.dim(1);
  for (int64_t c = 0; c < C; ++c) {
    double diff = masked.at3(ja, c, wa_i - 1) - masked.at3(jb, c, 0);
    pc.cost += diff * diff;
  }
  // temporal gap |k_b - (k_a + w_a)|
  double z_soft = static_cast<double>(kb - ka) - wa_s;
  double z_int = static_cast<double>(kb - ka - wa_i);
  double denom = std::sqrt(z_soft * z_soft + gp.smooth_delta * gp.smooth_delta);
  double gap = (mode == EvalMode::Hard) ? std::abs(z_int) : denom - gp.smooth_delta;
  pc.dws_a += gp.eta * (-z_soft / denom);
  // overlap
  double s_soft = std::min(ka + wa_s, kb + wb_s) - static_cast<double>(kb);
  double s_int = static_cast<double>(std::min(ka + wa_i, kb + wb_i) - kb);
  double ovl = (mode == EvalMode::Hard) ? std::max(0.0, s_int)
                                        : primflow::softplus(gp.beta_ovl * s_soft) / gp.beta_ovl;
  double dovl = primflow::sigmoid(gp.beta_ovl * s_soft);
  if (ka + wa_s <= kb + wb_s)
    pc.dws_a += gp.rho * dovl;
  else
    pc.dws_b += gp.rho * dovl;
  pc.cost += gp.eta * gap + gp.rho * ovl;
  return pc;
}

struct GeoGradSinks {
  Tensor* dR = nullptr;       // M x L
  Tensor* dMasked = nullptr;  // M x C x K
  Tensor* dWsoft = nullptr;   // M
};

double psi_geo_impl(const Tensor& R, const std::vector<int>& widths, const Tensor& masked,
                    const std::vector<double>& wsoft, const GeoParams& gp, EvalMode mode,
                    GeoGradSinks sinks) {
  auto evs = raw_events(R);
  size_t n = evs.size();
  if (n < 2) return 0.0;
  bool want = sinks.dR || sinks.dMasked || sinks.dWsoft;
  int64_t C = masked.dim(1);

  // onset groups
  std::vector<size_t> gstart;
  std::vector<size_t> group_of(n);
  for (size_t i = 0; i < n; ++i) {
    if (i == 0 || evs[i].k != evs[i - 1].k) gstart.push_back(i);
    group_of[i] = gstart.size() - 1;
  }
  gstart.push_back(n);
  size_t G = gstart.size() - 1;

  std::vector<double> dP(want ? n : 0, 0.0);
  std::vector<double> diffW(want ? G + 1 : 0, 0.0);
  double value = 0.0;

  auto wa = [&](size_t i) { return widths[static_cast<size_t>(evs[i].j)]; };
  auto ws = [&](size_t i) { return wsoft[static_cast<size_t>(evs[i].j)]; };

  // Full pair contribution with vacancy product V (no saturated factors).
  auto handle_pair = [&](size_t ai, size_t bi, double V) -> double {
    PairCost pc = pair_cost_core(masked, evs[ai].j, evs[ai].k, wa(ai), ws(ai), evs[bi].j,
                                 evs[bi].k, wa(bi), ws(bi), gp, mode);
    value += evs[ai].p * evs[bi].p * V * pc.cost;
    if (want) {
      if (sinks.dR) {
        dP[ai] += evs[bi].p * V * pc.cost;
        dP[bi] += evs[ai].p * V * pc.cost;
      }
      double scale = evs[ai].p * evs[bi].p * V;
      if (sinks.dMasked) {
        for (int64_t c = 0; c < C; ++c) {
          double diff = masked.at3(evs[ai].j, c, wa(ai) - 1) - masked.at3(evs[bi].j, c, 0);
          sinks.dMasked->at3(evs[ai].j, c, wa(ai) - 1) += scale * 2.0 * diff;
          sinks.dMasked->at3(evs[bi].j, c, 0) -= scale * 2.0 * diff;
        }
      }
      if (sinks.dWsoft) {
        (*sinks.dWsoft)[evs[ai].j] += scale * pc.dws_a;
        (*sinks.dWsoft)[evs[bi].j] += scale * pc.dws_b;
      }
    }
    return pc.cost;
  };

  for (size_t ai = 0; ai < n; ++ai) {
    size_t ga = group_of[ai];
    // same-onset pairs: empty between-set, vacancy 1
    for (size_t bi = ai + 1; bi < gstart[ga + 1]; ++bi) handle_pair(ai, bi, 1.0);
    // later groups with a running vacancy state over strictly-between events
    double nz = 1.0;  // product of non-saturated (1-P) factors
    int zc = 0;       // count of saturated (P=1) factors
    size_t zidx = 0;  // the unique saturated event when zc == 1
    for (size_t gb = ga + 1; gb < G; ++gb) {
      if (zc >= 2) break;
      if (gp.vacancy_cutoff > 0.0 && nz < gp.vacancy_cutoff) break;
      for (size_t bi = gstart[gb]; bi < gstart[gb + 1]; ++bi) {
        if (zc == 0) {
          double c = handle_pair(ai, bi, nz);
          if (want && sinks.dR && gb > ga + 1) {
            // spanning pair: vacancy gradient spread over groups (ga, gb)
            double X = evs[ai].p * evs[bi].p * c * nz;
            diffW[ga + 1] += X;
            diffW[gb] -= X;
          }
        } else if (want && sinks.dR) {
          // one saturated factor: the term vanishes but its derivative with
          // respect to the saturated event does not
          PairCost pc = pair_cost_core(masked, evs[ai].j, evs[ai].k, wa(ai), ws(ai), evs[bi].j,
                                       evs[bi].k, wa(bi), ws(bi), gp, mode);
          dP[zidx] -= evs[ai].p * evs[bi].p * pc.cost * nz;
        }
      }
      for (size_t ui = gstart[gb]; ui < gstart[gb + 1]; ++ui) {
        double f = 1.0 - evs[ui].p;
        if (f <= 0.0) {
          ++zc;
          zidx = ui;
        } else {
          nz *= f;
        }
      }
    }
  }

  if (want && sinks.dR) {
    double acc = 0.0;
    std::vector<double> W(G, 0.0);
    for (size_t g = 0; g < G; ++g) {
      acc += diffW[g];
      W[g] = acc;
    }
    for (size_t u = 0; u < n; ++u) {
      double f = 1.0 - evs[u].p;
      if (f > 0.0 && W[group_of[u]] != 0.0) dP[u] -= W[group_of[u]] / f;
    }
    for (size_t u = 0; u < n; ++u) sinks.dR->at2(evs[u].j, evs[u].k) += dP[u];
  }
  return value;
}

double psi_prim_impl(const Tensor& gate, const Tensor& x, double tau, EvalMode mode,
                     Tensor* dgate) {
  int64_t M = gate.dim(0), L = gate.dim(1);
  if (x.dim(1) != L) throw std::invalid_argument("psi_prim: gate/x length mismatch");
  int64_t C = x.dim(0);
  const double delta = 1e-3;  // smooth-|.| scale, matching the gap surrogate
  double value = 0.0;
  for (int64_t t = 0; t + 1 < L; ++t) {
    double d2 = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double d = x.at2(c, t + 1) - x.at2(c, t);
      d2 += d * d;
    }
    double w = std::exp(-std::sqrt(d2) / tau);
    for (int64_t j = 0; j < M; ++j) {
      double diff = gate.at2(j, t + 1) - gate.at2(j, t);
      double root = std::sqrt(diff * diff + delta * delta);
      value += w * (mode == EvalMode::Hard ? std::abs(diff) : root - delta);
      if (dgate) {
        double s = w * diff / root;
        dgate->at2(j, t + 1) += s;
        dgate->at2(j, t) -= s;
      }
    }
  }
  return value;
}

std::vector<Tensor> split_atoms(const Tensor& masked) {
  std::vector<Tensor> out;
  int64_t M = masked.dim(0), C = masked.dim(1), K = masked.dim(2);
  for (int64_t j = 0; j < M; ++j) {
    Tensor a({C, K});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < K; ++s) a.at2(c, s) = masked.at3(j, c, s);
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

std::vector<Event> extract_events(const Tensor& R, const std::vector<int>& widths,
                                  const Tensor& masked_atoms) {
  std::vector<Event> out;
  int64_t C = masked_atoms.dim(1);
  for (const Ev& e : raw_events(R)) {
    Event ev;
    ev.atom = e.j;
    ev.onset = e.k;
    ev.p = e.p;
    int w = widths[static_cast<size_t>(e.j)];
    ev.offset = e.k + w;
    ev.start.resize(static_cast<size_t>(C));
    ev.end.resize(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      ev.start[static_cast<size_t>(c)] = masked_atoms.at3(e.j, c, 0);
      ev.end[static_cast<size_t>(c)] = masked_atoms.at3(e.j, c, w - 1);
    }
    out.push_back(std::move(ev));
  }
  return out;
}

double overlap(const Event& a, const Event& b) {
  double lo = std::max(a.onset, b.onset);
  double hi = std::min(a.offset, b.offset);
  return std::max(0.0, hi - lo);
}

double overlap_soft(int onset_a, double w_a, int onset_b, double w_b, double beta) {
  double z = std::min(onset_a + w_a, onset_b + w_b) - static_cast<double>(std::max(onset_a, onset_b));
  return primflow::softplus(beta * z) / beta;
}

double pair_cost(const Event& a, const Event& b, const GeoParams& gp, EvalMode mode,
                 double wsoft_a, double wsoft_b) {
  if (a.onset > b.onset) throw std::invalid_argument("pair_cost: a must not start after b");
  double wa_s = wsoft_a > 0 ? wsoft_a : static_cast<double>(a.offset - a.onset);
  double wb_s = wsoft_b > 0 ? wsoft_b : static_cast<double>(b.offset - b.onset);
  double cost = 0.0;
  for (size_t c = 0; c < a.end.size(); ++c) {
    double diff = a.end[c] - b.start[c];
    cost += diff * diff;
  }
  double z_soft = static_cast<double>(b.onset - a.onset) - wa_s;
  double z_int = static_cast<double>(b.onset - a.offset);
  double gap = (mode == EvalMode::Hard)
                   ? std::abs(z_int)
                   : std::sqrt(z_soft * z_soft + gp.smooth_delta * gp.smooth_delta) - gp.smooth_delta;
  double ovl = (mode == EvalMode::Hard) ? overlap(a, b)
                                        : overlap_soft(a.onset, wa_s, b.onset, wb_s, gp.beta_ovl);
  return cost + gp.eta * gap + gp.rho * ovl;
}

double psi_geo(const Tensor& R, const std::vector<int>& widths, const Tensor& masked_atoms,
               const std::vector<double>& wsoft, const GeoParams& gp, EvalMode mode) {
  return psi_geo_impl(R, widths, masked_atoms, wsoft, gp, mode, {});
}

double psi_geo_bruteforce(const Tensor& R, const std::vector<int>& widths,
                          const Tensor& masked_atoms, const std::vector<double>& wsoft,
                          const GeoParams& gp, EvalMode mode) {
  auto evs = raw_events(R);
  if (evs.size() > 12)
    throw std::runtime_error("psi_geo_bruteforce: event count " + std::to_string(evs.size()) +
                             " exceeds the combinatorial guard (12)");
  double total = 0.0;
  for (size_t a = 0; a < evs.size(); ++a)
    for (size_t b = a + 1; b < evs.size(); ++b) {
      double prod = 1.0;
      for (size_t u = 0; u < evs.size(); ++u)
        if (evs[u].k > evs[a].k && evs[u].k < evs[b].k) prod *= 1.0 - evs[u].p;
      PairCost pc =
          pair_cost_core(masked_atoms, evs[a].j, evs[a].k, widths[static_cast<size_t>(evs[a].j)],
                         wsoft[static_cast<size_t>(evs[a].j)], evs[b].j, evs[b].k,
                         widths[static_cast<size_t>(evs[b].j)], wsoft[static_cast<size_t>(evs[b].j)],
                         gp, mode);
      total += evs[a].p * evs[b].p * prod * pc.cost;
    }
  return total;
}

double psi_prim(const Tensor& gate, const Tensor& x, double tau, EvalMode mode) {
  return psi_prim_impl(gate, x, tau, mode, nullptr);
}

EnergyBreakdown psi_total(const Tensor& R, const Tensor& gate, const Tensor& x,
                          const Tensor& masked_atoms, const std::vector<int>& widths,
                          const std::vector<double>& wsoft, const GeoParams& gp, EvalMode mode) {
  EnergyBreakdown b;
  Tensor xhat = dict::synthesize(split_atoms(masked_atoms), widths, R, gate);
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x[i] - xhat[i];
    b.rec += d * d;
  }
  for (double v : R.data) b.sparse += std::abs(v);
  b.prim = psi_prim(gate, x, gp.tau, mode);
  b.geo = psi_geo(R, widths, masked_atoms, wsoft, gp, mode);
  b.total = b.rec + gp.lambda_s * b.sparse + gp.lambda_p * b.prim + gp.lambda_g * b.geo;
  return b;
}

ad::Val psi_geo_node(ad::Tape& t, ad::Val R, ad::Val masked, ad::Val wsoft,
                     const std::vector<int>& widths, const GeoParams& gp, EvalMode mode) {
  const Tensor& rv = t.val(R);
  const Tensor& mv = t.val(masked);
  const Tensor& wv = t.val(wsoft);
  std::vector<double> ws(wv.data.begin(), wv.data.end());

  auto dR = std::make_shared<Tensor>(Tensor::zeros(rv.shape));
  auto dM = std::make_shared<Tensor>(Tensor::zeros(mv.shape));
  auto dW = std::make_shared<Tensor>(Tensor::zeros(wv.shape));
  GeoGradSinks sinks{dR.get(), dM.get(), dW.get()};
  double value = psi_geo_impl(rv, widths, mv, ws, gp, mode, sinks);

  return t.make(Tensor::scalar(value), [R, masked, wsoft, dR, dM, dW, o = t.size()](ad::Tape& tp) {
    double g0 = tp.grad(ad::Val{static_cast<int32_t>(o)})[0];
    if (g0 == 0.0) return;
    Tensor& gr = tp.grad_mut(R);
    for (int64_t i = 0; i < gr.numel(); ++i) gr[i] += g0 * (*dR)[i];
    Tensor& gm = tp.grad_mut(masked);
    for (int64_t i = 0; i < gm.numel(); ++i) gm[i] += g0 * (*dM)[i];
    Tensor& gw = tp.grad_mut(wsoft);
    for (int64_t i = 0; i < gw.numel(); ++i) gw[i] += g0 * (*dW)[i];
  }, "psi_geo");
}

ad::Val psi_prim_node(ad::Tape& t, ad::Val gate, const Tensor& x, double tau, EvalMode mode) {
  const Tensor& gv = t.val(gate);
  auto dG = std::make_shared<Tensor>(Tensor::zeros(gv.shape));
  double value = psi_prim_impl(gv, x, tau, mode, dG.get());
  return t.make(Tensor::scalar(value), [gate, dG, o = t.size()](ad::Tape& tp) {
    double g0 = tp.grad(ad::Val{static_cast<int32_t>(o)})[0];
    if (g0 == 0.0) return;
    Tensor& gg = tp.grad_mut(gate);
    for (int64_t i = 0; i < gg.numel(); ++i) gg[i] += g0 * (*dG)[i];
  }, "psi_prim");
}

EnergyResult psi_total_node(ad::Tape& t, ad::Val R, ad::Val gate, ad::Val masked, ad::Val wsoft,
                            const std::vector<int>& widths, const Tensor& x, const GeoParams& gp,
                            EvalMode mode) {
  ad::Val xhat = dict::synthesize_node(t, masked, R, gate, widths);
  ad::Val rec = t.sq_norm(t.sub(t.constant(x, "x"), xhat));
  // R holds values in [0,1] on every path, so the L1 norm is a plain sum
  ad::Val sparse = t.sum(R);
  ad::Val prim = psi_prim_node(t, gate, x, gp.tau, mode);
  ad::Val geo = psi_geo_node(t, R, masked, wsoft, widths, gp, mode);
  ad::Val total = t.add(t.add(rec, t.scale(sparse, gp.lambda_s)),
                        t.add(t.scale(prim, gp.lambda_p), t.scale(geo, gp.lambda_g)));
  EnergyResult res;
  res.total = total;
  res.rec = rec;
  res.sparse = sparse;
  res.prim = prim;
  res.geo = geo;
  res.value.rec = t.val(rec)[0];
  res.value.sparse = t.val(sparse)[0];
  res.value.prim = t.val(prim)[0];
  res.value.geo = t.val(geo)[0];
  res.value.total = t.val(total)[0];
  return res;
}

}  // namespace primflow::legal
