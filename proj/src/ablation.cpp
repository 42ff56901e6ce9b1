#include "primflow/ablation.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace primflow::ablation {

namespace {

Tensor full_window(const data::WindowSample& w) {
  int64_t C = w.observed.dim(0);
  int64_t T = w.observed.dim(1) + w.future.dim(1);
  Tensor x({C, T});
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t t = 0; t < w.observed.dim(1); ++t) x.at2(c, t) = w.observed.at2(c, t);
    for (int64_t t = 0; t < w.future.dim(1); ++t)
      x.at2(c, w.observed.dim(1) + t) = w.future.at2(c, t);
  }
  return x;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PreparedData prepare(const std::vector<data::WindowSample>& windows,
                     const data::NormStats* stats) {
  if (windows.empty()) throw std::invalid_argument("prepare: no windows");
  PreparedData out;
  std::vector<data::Trajectory> fulls;
  for (const auto& w : windows)
    fulls.push_back(data::Trajectory{w.source_id, w.task, full_window(w)});
  out.stats = stats ? *stats : data::compute_norm_stats(fulls);
  std::set<std::string> tasks;
  for (const auto& w : windows)
    if (!w.task.empty() && w.task != "rand") tasks.insert(w.task);
  out.task_vocab.assign(tasks.begin(), tasks.end());
  for (const auto& tr : fulls) {
    int tid = -1;
    for (size_t i = 0; i < out.task_vocab.size(); ++i)
      if (out.task_vocab[i] == tr.task) tid = static_cast<int>(i);
    out.samples.push_back(
        train::TrainSample{data::normalize_points(tr.points, out.stats), tid});
  }
  return out;
}

FitResult fit_and_eval(const std::vector<data::WindowSample>& train_windows,
                       const std::vector<data::WindowSample>& test_windows,
                       train::TrainConfig cfg) {
  PreparedData prep = prepare(train_windows, nullptr);
  FitResult fr;
  fr.result = train::train(prep.samples, cfg, prep.task_vocab);
  fr.result.model.stats = prep.stats;
  if (fr.result.diverged || cfg.obs <= 0 || test_windows.empty()) return fr;

  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (size_t i = 0; i < test_windows.size(); ++i) {
    const auto& w = test_windows[i];
    uint64_t seed = (cfg.seed << 20) ^ static_cast<uint64_t>(i);
    auto pred = train::predict(fr.result.model, w.observed, w.task, cfg.euler_steps,
                               cfg.guidance, seed);
    pairs.emplace_back(pred.future, w.future);
  }
  fr.test = metrics::evaluate(pairs);
  return fr;
}

std::vector<AblationRow> run_ablation(const std::vector<data::WindowSample>& train_windows,
                                      const std::vector<data::WindowSample>& test_windows,
                                      const train::TrainConfig& base,
                                      const AblationVariants& variants,
                                      const std::vector<uint64_t>& seeds) {
  struct Item {
    std::string name;
    train::TrainConfig cfg;
  };
  std::vector<Item> items;
  items.push_back({"base", base});
  for (int m : variants.m_values) {
    if (m == base.M) continue;
    train::TrainConfig c = base;
    c.M = m;
    items.push_back({"M=" + std::to_string(m), c});
  }
  if (variants.no_mask) {
    train::TrainConfig c = base;
    c.use_mask = false;
    items.push_back({"no_mask", c});
  }
  if (variants.no_primitives) {
    train::TrainConfig c = base;
    c.dense_baseline = true;
    items.push_back({"no_primitives", c});
  }

  std::vector<AblationRow> rows;
  for (const auto& item : items) {
    AblationRow row;
    row.name = item.name;
    std::vector<double> ades, fdes, ratios;
    for (uint64_t seed : seeds) {
      train::TrainConfig cfg = item.cfg;
      cfg.seed = seed;
      try {
        FitResult fr = fit_and_eval(train_windows, test_windows, cfg);
        if (fr.result.diverged) {
          row.failed = true;
          continue;
        }
        row.per_seed.push_back(fr.test);
        ades.push_back(fr.test.ade);
        fdes.push_back(fr.test.fde);
        if (fr.test.ratio_defined) ratios.push_back(fr.test.ratio);
      } catch (const std::exception&) {
        row.failed = true;
      }
    }
    if (row.per_seed.empty()) row.failed = true;
    row.ade_median = median(ades);
    row.fde_median = median(fdes);
    row.ratio_median = median(ratios);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace primflow::ablation
