#include "primflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace primflow::metrics {

double ade(const Tensor& pred, const Tensor& gt) {
  if (!pred.same_shape(gt) || pred.rank() != 2 || pred.dim(1) < 1)
    throw std::invalid_argument("ade: need equal C x F shapes, F >= 1");
  int64_t C = pred.dim(0), F = pred.dim(1);
  double acc = 0.0;
  for (int64_t t = 0; t < F; ++t) {
    double d2 = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double d = pred.at2(c, t) - gt.at2(c, t);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(F);
}

double fde(const Tensor& pred, const Tensor& gt) {
  if (!pred.same_shape(gt) || pred.rank() != 2 || pred.dim(1) < 1)
    throw std::invalid_argument("fde: need equal C x F shapes, F >= 1");
  int64_t C = pred.dim(0), F = pred.dim(1);
  double d2 = 0.0;
  for (int64_t c = 0; c < C; ++c) {
    double d = pred.at2(c, F - 1) - gt.at2(c, F - 1);
    d2 += d * d;
  }
  return std::sqrt(d2);
}

MetricReport evaluate(const std::vector<std::pair<Tensor, Tensor>>& pred_gt) {
  MetricReport r;
  r.n_samples = static_cast<int64_t>(pred_gt.size());
  if (pred_gt.empty()) return r;
  for (const auto& [p, g] : pred_gt) {
    r.ade += ade(p, g);
    r.fde += fde(p, g);
  }
  r.ade /= static_cast<double>(r.n_samples);
  r.fde /= static_cast<double>(r.n_samples);
  if (r.ade > 0.0) {
    r.ratio = r.fde / r.ade;
    r.ratio_defined = true;
  }
  return r;
}

namespace {

double percentile(std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double idx = q * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(idx);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

int64_t cells_per_block(int bins, int64_t C) {
  int64_t n = 1;
  for (int64_t c = 0; c < C; ++c) n *= bins;
  return n;
}

// flat cell index of a C-dim point, clamping out-of-range coordinates into
// the edge bins
int64_t cell_of(const double* x, const std::vector<double>& lo, const std::vector<double>& hi,
                int bins, int64_t C) {
  int64_t idx = 0;
  for (int64_t c = 0; c < C; ++c) {
    double span = hi[static_cast<size_t>(c)] - lo[static_cast<size_t>(c)];
    int b = 0;
    if (span > 0) {
      double u = (x[c] - lo[static_cast<size_t>(c)]) / span;
      b = static_cast<int>(u * bins);
      b = std::max(0, std::min(bins - 1, b));
    }
    idx = idx * bins + b;
  }
  return idx;
}

void histogram(const std::vector<Tensor>& set, const BinSpec& bins, std::vector<double>& out) {
  int64_t C = static_cast<int64_t>(bins.pos_lo.size());
  int64_t block = cells_per_block(bins.bins_per_axis, C);
  std::vector<double> pt(static_cast<size_t>(C));
  for (const Tensor& traj : set) {
    int64_t T = traj.dim(1);
    for (int64_t t = 0; t < T; ++t) {
      for (int64_t c = 0; c < C; ++c) pt[static_cast<size_t>(c)] = traj.at2(c, t);
      out[static_cast<size_t>(cell_of(pt.data(), bins.pos_lo, bins.pos_hi, bins.bins_per_axis, C))] += 1.0;
    }
    for (int64_t t = 0; t + 1 < T; ++t) {
      for (int64_t c = 0; c < C; ++c)
        pt[static_cast<size_t>(c)] = traj.at2(c, t + 1) - traj.at2(c, t);
      out[static_cast<size_t>(
          block + cell_of(pt.data(), bins.disp_lo, bins.disp_hi, bins.bins_per_axis, C))] += 1.0;
    }
  }
}

}  // namespace

BinSpec default_bins(const std::vector<Tensor>& reference, int bins_per_axis) {
  if (reference.empty()) throw std::invalid_argument("default_bins: empty reference set");
  int64_t C = reference[0].dim(0);
  BinSpec b;
  b.bins_per_axis = C <= 3 ? bins_per_axis : 8;
  for (int64_t c = 0; c < C; ++c) {
    std::vector<double> pos, disp;
    for (const Tensor& traj : reference) {
      for (int64_t t = 0; t < traj.dim(1); ++t) pos.push_back(traj.at2(c, t));
      for (int64_t t = 0; t + 1 < traj.dim(1); ++t)
        disp.push_back(traj.at2(c, t + 1) - traj.at2(c, t));
    }
    b.pos_lo.push_back(percentile(pos, 0.01));
    b.pos_hi.push_back(percentile(pos, 0.99));
    b.disp_lo.push_back(percentile(disp, 0.01));
    b.disp_hi.push_back(percentile(disp, 0.99));
  }
  return b;
}

JsdReport jsd(const std::vector<Tensor>& generated, const std::vector<Tensor>& real,
              const BinSpec& bins) {
  if (generated.empty() || real.empty()) throw std::invalid_argument("jsd: empty input set");
  int64_t C = static_cast<int64_t>(bins.pos_lo.size());
  int64_t cells = 2 * cells_per_block(bins.bins_per_axis, C);
  std::vector<double> p(static_cast<size_t>(cells), 0.0), q(static_cast<size_t>(cells), 0.0);
  histogram(generated, bins, p);
  histogram(real, bins, q);
  const double eps = 1e-10;
  double psum = 0, qsum = 0;
  for (int64_t i = 0; i < cells; ++i) {
    p[static_cast<size_t>(i)] += eps;
    q[static_cast<size_t>(i)] += eps;
    psum += p[static_cast<size_t>(i)];
    qsum += q[static_cast<size_t>(i)];
  }
  double acc = 0.0;
  for (int64_t i = 0; i < cells; ++i) {
    double pi = p[static_cast<size_t>(i)] / psum;
    double qi = q[static_cast<size_t>(i)] / qsum;
    double mi = 0.5 * (pi + qi);
    if (pi > 0) acc += 0.5 * pi * std::log2(pi / mi);
    if (qi > 0) acc += 0.5 * qi * std::log2(qi / mi);
  }
  JsdReport rep;
  rep.jsd_bits = std::max(0.0, acc);
  rep.bins = bins;
  rep.n_generated = static_cast<int64_t>(generated.size());
  rep.n_real = static_cast<int64_t>(real.size());
  return rep;
}

}  // namespace primflow::metrics
