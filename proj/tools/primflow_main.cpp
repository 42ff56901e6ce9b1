#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "primflow/ablation.hpp"
#include "primflow/checkpoint.hpp"
#include "primflow/gradcheck.hpp"
#include "primflow/kvconfig.hpp"
#include "primflow/metrics.hpp"
#include "primflow/svg.hpp"
#include "primflow/trajdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace primflow;

namespace {

struct ConfigCli {
  std::string config_path;
  std::vector<std::string> set_pairs;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat key = value config file");
    app->add_option("--set", set_pairs, "override config entries, key=value")->take_all();
  }
  train::TrainConfig resolve() const {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = load_kv_file(config_path);
    for (const auto& kvp : set_pairs) {
      size_t eq = kvp.find('=');
      if (eq == std::string::npos) throw std::runtime_error("--set expects key=value: " + kvp);
      kv[kvp.substr(0, eq)] = kvp.substr(eq + 1);
    }
    auto cfg = train::TrainConfig::from_kv(kv);
    cfg.validate();
    return cfg;
  }
};

json metric_json(const metrics::MetricReport& r) {
  json j{{"ade", r.ade}, {"fde", r.fde}, {"n_samples", r.n_samples}};
  if (r.ratio_defined)
    j["ratio"] = r.ratio;
  else
    j["ratio"] = nullptr;
  return j;
}

json energy_json(const legal::EnergyBreakdown& b) {
  return json{{"rec", b.rec}, {"sparse", b.sparse}, {"prim", b.prim}, {"geo", b.geo},
              {"total", b.total}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

/// Full-timeline unconditional samples: every non-overlapping L-slice.
std::vector<train::TrainSample> unconditional_samples(const std::vector<data::Trajectory>& trajs,
                                                      const data::NormStats& stats, int L) {
  std::vector<train::TrainSample> out;
  for (const auto& tr : trajs)
    for (int64_t off = 0; off + L <= tr.length(); off += L) {
      Tensor x({tr.channels(), L});
      for (int64_t c = 0; c < tr.channels(); ++c)
        for (int64_t t = 0; t < L; ++t) x.at2(c, t) = tr.points.at2(c, off + t);
      out.push_back(train::TrainSample{data::normalize_points(x, stats), -1});
    }
  return out;
}

struct SplitWindows {
  std::vector<data::WindowSample> train, val, test;
};

SplitWindows split_windows(std::vector<data::WindowSample> windows, uint64_t seed) {
  Rng rng(seed);
  for (size_t i = windows.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(windows[i - 1], windows[j]);
  }
  SplitWindows sp;
  size_t n = windows.size();
  size_t n_train = n * 8 / 10, n_val = n / 10;
  for (size_t i = 0; i < n; ++i) {
    if (i < n_train)
      sp.train.push_back(std::move(windows[i]));
    else if (i < n_train + n_val)
      sp.val.push_back(std::move(windows[i]));
    else
      sp.test.push_back(std::move(windows[i]));
  }
  return sp;
}

void write_metrics_csv(const std::vector<train::EpochStats>& log, const std::string& path) {
  std::ofstream out(path);
  out << "epoch,psi_dec,fm_residual,psi_flow,total,utilization\n";
  for (const auto& e : log)
    out << e.epoch << "," << e.psi_dec << "," << e.fm_residual << "," << e.psi_flow << ","
        << e.total << "," << e.utilization << "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::string& format) {
  auto kv = load_kv_file(spec_path);
  data::SynthSpec spec;
  spec.M_true = static_cast<int>(kv_int(kv, "M_true", spec.M_true));
  spec.C = static_cast<int>(kv_int(kv, "C", spec.C));
  spec.L = static_cast<int>(kv_int(kv, "L", spec.L));
  spec.K = static_cast<int>(kv_int(kv, "K", spec.K));
  spec.noise_std = kv_double(kv, "noise_std", spec.noise_std);
  spec.n_trajectories = static_cast<int>(kv_int(kv, "n_trajectories", spec.n_trajectories));
  spec.seed = static_cast<uint64_t>(kv_int(kv, "seed", 0));
  spec.n_tasks = static_cast<int>(kv_int(kv, "n_tasks", spec.n_tasks));
  auto [trajs, truth] = data::synth_generate(spec);
  fs::create_directories(out_dir);
  auto fmt = format == "jsonl" ? data::FileFormat::Jsonl : data::FileFormat::Csv;
  std::string data_path = out_dir + "/data." + (format == "jsonl" ? "jsonl" : "csv");
  data::save_trajectories(trajs, data_path, fmt);
  data::save_truth(truth, out_dir + "/truth.json");
  json j{{"trajectories", trajs.size()},
         {"atoms", truth.atoms.size()},
         {"data", data_path},
         {"truth", out_dir + "/truth.json"}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const ConfigCli& cc, const std::string& data_path, const std::string& out_path,
              const std::string& metrics_path, const std::string& emit_test) {
  auto cfg = cc.resolve();
  auto trajs = data::load_trajectories(data_path, data::format_from_path(data_path));
  train::TrainResult result;
  if (cfg.obs > 0) {
    auto windows = data::window(trajs, cfg.L, cfg.obs, cfg.L);
    auto sp = split_windows(std::move(windows), cfg.seed);
    if (!emit_test.empty()) {
      std::vector<data::Trajectory> test_trajs;
      for (const auto& w : sp.test) {
        Tensor full({w.observed.dim(0), cfg.L});
        for (int64_t c = 0; c < full.dim(0); ++c) {
          for (int64_t t = 0; t < cfg.obs; ++t) full.at2(c, t) = w.observed.at2(c, t);
          for (int64_t t = cfg.obs; t < cfg.L; ++t) full.at2(c, t) = w.future.at2(c, t - cfg.obs);
        }
        test_trajs.push_back(
            data::Trajectory{w.source_id + "@" + std::to_string(w.offset), w.task, full});
      }
      data::save_trajectories(test_trajs, emit_test, data::format_from_path(emit_test));
    }
    auto prep = ablation::prepare(sp.train, nullptr);
    result = train::train(prep.samples, cfg, prep.task_vocab);
    result.model.stats = prep.stats;
  } else {
    auto stats = data::compute_norm_stats(trajs);
    auto samples = unconditional_samples(trajs, stats, cfg.L);
    result = train::train(samples, cfg, {});
    result.model.stats = stats;
  }
  auto ck = train::make_checkpoint(result);
  train::save_checkpoint(ck, out_path);
  if (!metrics_path.empty()) write_metrics_csv(result.log, metrics_path);
  json j{{"checkpoint", out_path},
         {"epochs", result.log.size()},
         {"diverged", result.diverged},
         {"final_total", result.log.empty() ? 0.0 : result.log.back().total},
         {"utilization", result.log.empty() ? 0.0 : result.log.back().utilization}};
  if (result.diverged) j["divergence_term"] = result.divergence_term;
  std::cout << j.dump(2) << "\n";
  return result.diverged ? 2 : 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_path, const std::string& report_path, int steps, double g,
                uint64_t seed, const std::string& svg_dir) {
  auto model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  if (model.cfg.obs <= 0) throw std::runtime_error("predict: checkpoint is unconditional");
  if (steps <= 0) steps = model.cfg.euler_steps;
  auto trajs = data::load_trajectories(data_path, data::format_from_path(data_path));
  auto windows = data::window(trajs, model.cfg.L, model.cfg.obs, model.cfg.L);
  std::vector<std::pair<Tensor, Tensor>> pairs;
  std::vector<data::Trajectory> preds;
  int fallbacks = 0;
  for (size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    auto pred = train::predict(model, w.observed, w.task, steps, g, seed + i);
    fallbacks += pred.fallback ? 1 : 0;
    pairs.emplace_back(pred.future, w.future);
    preds.push_back(
        data::Trajectory{w.source_id + "@" + std::to_string(w.offset), w.task, pred.future});
    if (!svg_dir.empty() && i < 8 && pred.gate.numel() > 0) {
      fs::create_directories(svg_dir);
      Tensor gate_future({pred.gate.dim(0), model.cfg.L - model.cfg.obs});
      for (int64_t jj = 0; jj < pred.gate.dim(0); ++jj)
        for (int64_t t = model.cfg.obs; t < model.cfg.L; ++t)
          gate_future.at2(jj, t - model.cfg.obs) = pred.gate.at2(jj, t);
      svg::save_svg(svg::render_tiling(pred.future, gate_future),
                    svg_dir + "/pred_" + std::to_string(i) + ".svg");
    }
  }
  if (!out_path.empty()) data::save_trajectories(preds, out_path, data::format_from_path(out_path));
  auto rep = metrics::evaluate(pairs);
  json j = metric_json(rep);
  j["fallbacks"] = fallbacks;
  if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt_path, int n, int steps, uint64_t seed,
               const std::string& out_path, const std::string& svg_dir) {
  auto model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  if (steps <= 0) steps = model.cfg.euler_steps;
  Rng rng(seed);
  std::vector<data::Trajectory> out;
  for (int i = 0; i < n; ++i) {
    Tensor x = train::sample_trajectory(model, steps, rng);
    out.push_back(data::Trajectory{"sample" + std::to_string(i), "", x});
  }
  if (!out_path.empty()) data::save_trajectories(out, out_path, data::format_from_path(out_path));
  if (!svg_dir.empty()) {
    fs::create_directories(svg_dir);
    for (size_t i = 0; i < out.size() && i < 8; ++i) {
      Tensor gate({1, out[i].points.dim(1)});
      svg::save_svg(svg::render_tiling(out[i].points, gate),
                    svg_dir + "/sample_" + std::to_string(i) + ".svg");
    }
  }
  json j{{"samples", n}, {"out", out_path}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& report_path, bool with_jsd) {
  auto pred = data::load_trajectories(pred_path, data::format_from_path(pred_path));
  auto gt = data::load_trajectories(gt_path, data::format_from_path(gt_path));
  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (const auto& p : pred) {
    const data::Trajectory* match = nullptr;
    for (const auto& g : gt)
      if (g.id == p.id) match = &g;
    if (!match) throw std::runtime_error("eval: no ground-truth trajectory with id " + p.id);
    pairs.emplace_back(p.points, match->points);
  }
  auto rep = metrics::evaluate(pairs);
  json j = metric_json(rep);
  if (with_jsd) {
    std::vector<Tensor> ps, gs;
    for (const auto& p : pred) ps.push_back(p.points);
    for (const auto& g : gt) gs.push_back(g.points);
    auto bins = metrics::default_bins(gs);
    auto jr = metrics::jsd(ps, gs, bins);
    j["jsd_bits"] = jr.jsd_bits;
    j["jsd_bins_per_axis"] = jr.bins.bins_per_axis;
  }
  if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval_energy(const std::string& ckpt_path, const std::string& placements_path,
                    const std::string& traj_path, const std::string& id,
                    const std::string& svg_path) {
  auto model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  std::ifstream in(placements_path);
  if (!in) throw std::runtime_error("cannot open " + placements_path);
  json pl = json::parse(in);
  Tensor R({model.cfg.M, model.cfg.L});
  for (const auto& e : pl) {
    int j = e.at(0).get<int>(), k = e.at(1).get<int>();
    double p = e.at(2).get<double>();
    if (j < 0 || j >= model.cfg.M || k < 0 || k >= model.cfg.L)
      throw std::runtime_error("placement (" + std::to_string(j) + "," + std::to_string(k) +
                               ") out of range");
    R.at2(j, k) = p;
  }
  auto trajs = data::load_trajectories(traj_path, data::format_from_path(traj_path));
  const data::Trajectory* tr = nullptr;
  for (const auto& t : trajs)
    if (id.empty() || t.id == id) {
      tr = &t;
      break;
    }
  if (!tr) throw std::runtime_error("trajectory id not found: " + id);
  if (tr->length() != model.cfg.L) throw std::runtime_error("trajectory length != model timeline");
  Tensor x = data::normalize_points(tr->points, model.stats);

  auto widths = model.widths();
  Tensor masked = model.masked_atoms();
  const Tensor& gamma = model.params.at("dict.gamma");
  std::vector<double> gvec(gamma.data.begin(), gamma.data.end());
  Tensor gate = dict::wta_gate(R, widths, gvec);
  auto gp = train::geo_params(model.cfg);
  auto b = legal::psi_total(R, gate, x, masked, widths, model.soft_widths(), gp);
  std::cout << energy_json(b).dump(2) << "\n";
  if (!svg_path.empty()) {
    auto evs = legal::extract_events(R, widths, masked);
    svg::save_svg(svg::render_events(evs, model.cfg.M, model.cfg.L), svg_path);
  }
  return 0;
}

int cmd_inspect_dict(const std::string& ckpt_path, const std::string& out_svg,
                     const std::string& out_json) {
  auto model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  Tensor masked = model.masked_atoms();
  auto widths = model.widths();
  if (!out_svg.empty()) svg::save_svg(svg::render_dictionary(masked, widths), out_svg);
  if (!out_json.empty()) {
    json atoms = json::array();
    for (int jx = 0; jx < model.cfg.M; ++jx) {
      json ch = json::array();
      for (int64_t c = 0; c < model.cfg.C; ++c) {
        json row = json::array();
        for (int64_t s = 0; s < model.cfg.K; ++s) row.push_back(masked.at3(jx, c, s));
        ch.push_back(std::move(row));
      }
      atoms.push_back(json{{"content", std::move(ch)},
                           {"width", widths[static_cast<size_t>(jx)]},
                           {"soft_width", model.soft_widths()[static_cast<size_t>(jx)]},
                           {"gate_priority", model.params.at("dict.gamma")[jx]}});
    }
    write_text(out_json, atoms.dump(2) + "\n");
  }
  json j{{"atoms", model.cfg.M}, {"svg", out_svg}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& size, uint64_t seed, double eps) {
  if (size != "tiny") throw std::runtime_error("gradcheck: unknown --size '" + size + "'");
  train::TrainConfig cfg;
  cfg.C = 2;
  cfg.L = 16;
  cfg.M = 3;
  cfg.K = 6;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.blocks = 1;
  Rng mrng(seed);
  auto model = train::init_model(cfg, {}, mrng);
  for (auto& [name, t] : model.params.items) {
    bool zeroed = name.find("out_w") != std::string::npos ||
                  name.find("out_b") != std::string::npos ||
                  name.find("ada_") != std::string::npos ||
                  name.find("gamma") != std::string::npos;
    if (zeroed)
      for (double& x : t.data) x = 0.1 * mrng.normal();
  }
  Rng drng(seed + 1);
  train::TrainSample sample{drng.normal_tensor({cfg.C, cfg.L}, 1.0), -1};
  Tensor logits = drng.normal_tensor({cfg.M, cfg.L}, 1.0);

  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  for (const auto& [n, t] : model.params.items) {
    names.push_back(n);
    tensors.push_back(t);
  }
  names.push_back("__logits__");
  tensors.push_back(logits);

  struct TermSpec {
    const char* name;
    int which;
  };
  const TermSpec terms[] = {{"psi_rec", 0},    {"psi_sparse", 1},  {"psi_prim", 2},
                            {"psi_geo", 3},    {"fm_residual", 4}, {"joint_total", 5}};
  json out = json::array();
  bool ok = true;
  for (const auto& term : terms) {
    ad::ScalarFn fn = [&, which = term.which](ad::Tape& tape,
                                              const std::vector<ad::Val>& leaves) -> ad::Val {
      LeafMap lm;
      ad::Val lg{};
      for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "__logits__")
          lg = leaves[i];
        else
          lm.items.emplace_back(names[i], leaves[i]);
      }
      Rng rng(seed + 2);
      auto jl = train::joint_loss(tape, lm, lg, sample, cfg, rng, dict::EvalMode::Relaxed);
      switch (which) {
        case 0: return jl.dec_terms.rec;
        case 1: return jl.dec_terms.sparse;
        case 2: return jl.dec_terms.prim;
        case 3: return jl.dec_terms.geo;
        case 4: return jl.fm;
        default: return jl.total;
      }
    };
    auto rep = ad::grad_check(fn, tensors, eps);
    bool pass = rep.pass(1e-4);
    ok = ok && pass;
    out.push_back(json{{"term", term.name},
                       {"max_abs_err", rep.max_abs_err},
                       {"max_rel_err", rep.max_rel_err},
                       {"worst_index", rep.worst_index},
                       {"checked", rep.n_checked},
                       {"pass", pass}});
    std::cerr << (pass ? "[pass] " : "[FAIL] ") << term.name << " max_rel_err=" << rep.max_rel_err
              << "\n";
  }
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 2;
}

int cmd_ablate(const ConfigCli& cc, const std::string& data_path, const std::string& out_dir,
               std::vector<uint64_t> seeds, std::vector<int> m_values, bool no_mask,
               bool no_primitives) {
  auto cfg = cc.resolve();
  if (cfg.obs <= 0) throw std::runtime_error("ablate: config must be conditional (obs > 0)");
  auto trajs = data::load_trajectories(data_path, data::format_from_path(data_path));
  auto windows = data::window(trajs, cfg.L, cfg.obs, cfg.L);
  auto sp = split_windows(std::move(windows), cfg.seed);
  ablation::AblationVariants variants;
  variants.m_values = m_values;
  variants.no_mask = no_mask;
  variants.no_primitives = no_primitives;
  if (seeds.empty()) seeds = {cfg.seed, cfg.seed + 1, cfg.seed + 2};
  auto rows = ablation::run_ablation(sp.train, sp.test, cfg, variants, seeds);
  json jrows = json::array();
  std::string table = "variant          ade       fde       fde/ade   seeds  status\n";
  char buf[160];
  for (const auto& r : rows) {
    json seeds_json = json::array();
    for (const auto& s : r.per_seed) seeds_json.push_back(metric_json(s));
    jrows.push_back(json{{"name", r.name},
                         {"failed", r.failed},
                         {"ade_median", r.ade_median},
                         {"fde_median", r.fde_median},
                         {"ratio_median", r.ratio_median},
                         {"per_seed", std::move(seeds_json)}});
    std::snprintf(buf, sizeof(buf), "%-16s %-9.4f %-9.4f %-9.4f %-6zu %s\n", r.name.c_str(),
                  r.ade_median, r.fde_median, r.ratio_median, r.per_seed.size(),
                  r.failed ? "FAILED" : "ok");
    table += buf;
  }
  fs::create_directories(out_dir);
  write_text(out_dir + "/ablation.json", jrows.dump(2) + "\n");
  write_text(out_dir + "/ablation.txt", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional trajectory generation over a learned motion-primitive library"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic compositional dataset");
  std::string spec_path, out_dir = "synth_out", format = "csv";
  synth->add_option("--spec", spec_path, "synthesis spec (key = value)")->required();
  synth->add_option("--out", out_dir, "output directory");
  synth->add_option("--format", format, "csv|jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  auto* tr = app.add_subcommand("train", "train the joint dictionary + flow model");
  ConfigCli tr_cfg;
  tr_cfg.attach(tr);
  std::string tr_data, tr_out = "model.ckpt", tr_metrics, tr_emit_test;
  tr->add_option("--data", tr_data, "trajectory file (csv/jsonl)")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--metrics", tr_metrics, "per-epoch metrics csv");
  tr->add_option("--emit-test", tr_emit_test, "write the held-out test windows here");

  auto* pr = app.add_subcommand("predict", "conditional prediction on windowed data");
  std::string pr_ckpt, pr_data, pr_out, pr_report, pr_svg;
  int pr_steps = 0;
  double pr_g = -1.0;
  uint64_t pr_seed = 1234;
  pr->add_option("--ckpt", pr_ckpt)->required();
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--out", pr_out, "predicted futures file");
  pr->add_option("--report", pr_report, "metric report json");
  pr->add_option("--steps", pr_steps, "Euler steps (default from checkpoint)");
  pr->add_option("--guidance", pr_g, "guidance scale (default from checkpoint)");
  pr->add_option("--seed", pr_seed);
  pr->add_option("--svg", pr_svg, "directory for tiling renders");

  auto* sa = app.add_subcommand("sample", "unconditional generation");
  std::string sa_ckpt, sa_out = "samples.csv", sa_svg;
  int sa_n = 16, sa_steps = 0;
  uint64_t sa_seed = 1234;
  sa->add_option("--ckpt", sa_ckpt)->required();
  sa->add_option("--n", sa_n, "number of samples");
  sa->add_option("--steps", sa_steps);
  sa->add_option("--seed", sa_seed);
  sa->add_option("--out", sa_out);
  sa->add_option("--svg", sa_svg, "directory for tiling renders");

  auto* ev = app.add_subcommand("eval", "displacement metrics between two trajectory files");
  std::string ev_pred, ev_gt, ev_report;
  bool ev_jsd = false;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--report", ev_report);
  ev->add_flag("--jsd", ev_jsd, "also report the distributional divergence");

  auto* ee = app.add_subcommand("eval-energy", "legality energy of a placement list");
  std::string ee_ckpt, ee_pl, ee_traj, ee_id, ee_svg;
  ee->add_option("--ckpt", ee_ckpt)->required();
  ee->add_option("--placements", ee_pl, "json array of [atom, onset, p]")->required();
  ee->add_option("--traj", ee_traj, "trajectory file")->required();
  ee->add_option("--id", ee_id, "trajectory id (default: first)");
  ee->add_option("--svg", ee_svg, "event-timeline render");

  auto* insp = app.add_subcommand("inspect-dict", "render the effective atoms");
  std::string in_ckpt, in_svg = "dict.svg", in_json;
  insp->add_option("--ckpt", in_ckpt)->required();
  insp->add_option("--out", in_svg, "svg path");
  insp->add_option("--json", in_json, "dump atoms as json");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every loss term");
  std::string gc_size = "tiny";
  uint64_t gc_seed = 7;
  double gc_eps = 1e-5;
  gc->add_option("--size", gc_size, "instance size (tiny)");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--eps", gc_eps);

  auto* ab = app.add_subcommand("ablate", "dictionary-size and component ablations");
  ConfigCli ab_cfg;
  ab_cfg.attach(ab);
  std::string ab_data, ab_out = "ablation_out";
  std::vector<uint64_t> ab_seeds;
  std::vector<int> ab_m;
  bool ab_skip_no_mask = false, ab_skip_no_prim = false;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--out", ab_out);
  ab->add_option("--seeds", ab_seeds, "training seeds")->delimiter(',');
  ab->add_option("--m-values", ab_m, "dictionary sizes to sweep")->delimiter(',');
  ab->add_flag("--skip-no-mask", ab_skip_no_mask, "skip the mask-free variant");
  ab->add_flag("--skip-no-primitives", ab_skip_no_prim, "skip the dense variant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_path, out_dir, format);
    if (tr->parsed()) return cmd_train(tr_cfg, tr_data, tr_out, tr_metrics, tr_emit_test);
    if (pr->parsed()) {
      double g = pr_g;
      if (g < 0) g = train::load_checkpoint(pr_ckpt).cfg.guidance;
      return cmd_predict(pr_ckpt, pr_data, pr_out, pr_report, pr_steps, g, pr_seed, pr_svg);
    }
    if (sa->parsed()) return cmd_sample(sa_ckpt, sa_n, sa_steps, sa_seed, sa_out, sa_svg);
    if (ev->parsed()) return cmd_eval(ev_pred, ev_gt, ev_report, ev_jsd);
    if (ee->parsed()) return cmd_eval_energy(ee_ckpt, ee_pl, ee_traj, ee_id, ee_svg);
    if (insp->parsed()) return cmd_inspect_dict(in_ckpt, in_svg, in_json);
    if (gc->parsed()) return cmd_gradcheck(gc_size, gc_seed, gc_eps);
    if (ab->parsed())
      return cmd_ablate(ab_cfg, ab_data, ab_out, ab_seeds, ab_m, !ab_skip_no_mask,
                        !ab_skip_no_prim);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
