#include "primflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "primflow/kvconfig.hpp"

namespace primflow::train {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["C"] = std::to_string(C);
  kv["L"] = std::to_string(L);
  kv["obs"] = std::to_string(obs);
  kv["M"] = std::to_string(M);
  kv["K"] = std::to_string(K);
  kv["alpha"] = fmt(alpha);
  kv["use_mask"] = use_mask ? "true" : "false";
  kv["dense_baseline"] = dense_baseline ? "true" : "false";
  kv["lambda_s"] = fmt(lambda_s);
  kv["lambda_p"] = fmt(lambda_p);
  kv["lambda_g"] = fmt(lambda_g);
  kv["beta"] = fmt(beta);
  kv["eta"] = fmt(eta);
  kv["rho"] = fmt(rho);
  kv["tau"] = fmt(tau);
  kv["sigma"] = fmt(sigma);
  kv["euler_steps"] = std::to_string(euler_steps);
  kv["guidance"] = fmt(guidance);
  kv["guidance_dropout"] = fmt(guidance_dropout);
  kv["d_model"] = std::to_string(d_model);
  kv["heads"] = std::to_string(heads);
  kv["blocks"] = std::to_string(blocks);
  kv["lr_theta"] = fmt(lr_theta);
  kv["lr_logits"] = fmt(lr_logits);
  kv["lr_dict"] = fmt(lr_dict);
  kv["batch_size"] = std::to_string(batch_size);
  kv["epochs"] = std::to_string(epochs);
  kv["seed"] = std::to_string(seed);
  kv["init_logit"] = fmt(init_logit);
  kv["threads"] = std::to_string(threads);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.C = static_cast<int>(kv_int(kv, "C", c.C));
  c.L = static_cast<int>(kv_int(kv, "L", c.L));
  c.obs = static_cast<int>(kv_int(kv, "obs", c.obs));
  c.M = static_cast<int>(kv_int(kv, "M", c.M));
  c.K = static_cast<int>(kv_int(kv, "K", c.K));
  c.alpha = kv_double(kv, "alpha", c.alpha);
  c.use_mask = kv_bool(kv, "use_mask", c.use_mask);
  c.dense_baseline = kv_bool(kv, "dense_baseline", c.dense_baseline);
  c.lambda_s = kv_double(kv, "lambda_s", c.lambda_s);
  c.lambda_p = kv_double(kv, "lambda_p", c.lambda_p);
  c.lambda_g = kv_double(kv, "lambda_g", c.lambda_g);
  c.beta = kv_double(kv, "beta", c.beta);
  c.eta = kv_double(kv, "eta", c.eta);
  c.rho = kv_double(kv, "rho", c.rho);
  c.tau = kv_double(kv, "tau", c.tau);
  c.sigma = kv_double(kv, "sigma", c.sigma);
  c.euler_steps = static_cast<int>(kv_int(kv, "euler_steps", c.euler_steps));
  c.guidance = kv_double(kv, "guidance", c.guidance);
  c.guidance_dropout = kv_double(kv, "guidance_dropout", c.guidance_dropout);
  c.d_model = static_cast<int>(kv_int(kv, "d_model", c.d_model));
  c.heads = static_cast<int>(kv_int(kv, "heads", c.heads));
  c.blocks = static_cast<int>(kv_int(kv, "blocks", c.blocks));
  c.lr_theta = kv_double(kv, "lr_theta", c.lr_theta);
  c.lr_logits = kv_double(kv, "lr_logits", c.lr_logits);
  c.lr_dict = kv_double(kv, "lr_dict", c.lr_dict);
  c.batch_size = static_cast<int>(kv_int(kv, "batch_size", c.batch_size));
  c.epochs = static_cast<int>(kv_int(kv, "epochs", c.epochs));
  c.seed = static_cast<uint64_t>(kv_int(kv, "seed", static_cast<int64_t>(c.seed)));
  c.init_logit = kv_double(kv, "init_logit", c.init_logit);
  c.threads = static_cast<int>(kv_int(kv, "threads", c.threads));
  return c;
}

void TrainConfig::validate() const {
  if (M < 1 || K < 1 || K > L || C < 1) throw std::invalid_argument("config: need M>=1, 1<=K<=L");
  if (lambda_s < 0 || lambda_p < 0 || lambda_g < 0 || beta < 0 || eta < 0 || rho < 0 || tau <= 0)
    throw std::invalid_argument("config: weights must be >= 0 (tau > 0)");
  if (obs < 0 || obs >= L) throw std::invalid_argument("config: 0 <= obs < L");
  if (d_model % heads != 0) throw std::invalid_argument("config: d_model divisible by heads");
  if (batch_size < 1 || epochs < 0) throw std::invalid_argument("config: bad batch/epochs");
}

legal::GeoParams geo_params(const TrainConfig& cfg) {
  legal::GeoParams gp;
  gp.eta = cfg.eta;
  gp.rho = cfg.rho;
  gp.tau = cfg.tau;
  gp.lambda_s = cfg.lambda_s;
  gp.lambda_p = cfg.lambda_p;
  gp.lambda_g = cfg.lambda_g;
  return gp;
}

flow::NetConfig Model::net_config() const {
  flow::NetConfig nc;
  nc.tokens = cfg.dense_baseline ? cfg.C : cfg.M;
  nc.L = cfg.L;
  nc.d = cfg.d_model;
  nc.heads = cfg.heads;
  nc.blocks = cfg.blocks;
  nc.n_tasks = static_cast<int>(task_vocab.size());
  nc.C = cfg.C;
  return nc;
}

int Model::task_id(const std::string& task) const {
  for (size_t i = 0; i < task_vocab.size(); ++i)
    if (task_vocab[i] == task) return static_cast<int>(i);
  return -1;
}

std::vector<double> Model::soft_widths() const {
  if (cfg.dense_baseline)
    return std::vector<double>(static_cast<size_t>(cfg.C), static_cast<double>(cfg.L));
  if (!cfg.use_mask)
    return std::vector<double>(static_cast<size_t>(cfg.M), static_cast<double>(cfg.K));
  const Tensor& phi = params.at("dict.phi");
  std::vector<double> w(static_cast<size_t>(cfg.M));
  for (int j = 0; j < cfg.M; ++j) w[static_cast<size_t>(j)] = dict::soft_width(phi[j], cfg.K);
  return w;
}

std::vector<int> Model::widths() const {
  if (cfg.dense_baseline) return std::vector<int>(static_cast<size_t>(cfg.C), cfg.L);
  std::vector<int> out;
  for (double w : soft_widths())
    out.push_back(std::max(1, std::min(cfg.K, dict::round_width(w))));
  return out;
}

Tensor Model::masked_atoms() const {
  const Tensor& content = params.at("dict.content");
  if (!cfg.use_mask) return content;
  Tensor out = content;
  const Tensor& phi = params.at("dict.phi");
  for (int j = 0; j < cfg.M; ++j) {
    auto mask = dict::length_mask(dict::soft_width(phi[j], cfg.K), cfg.K, cfg.alpha);
    for (int64_t c = 0; c < cfg.C; ++c)
      for (int64_t s = 0; s < cfg.K; ++s) out.at3(j, c, s) *= mask[static_cast<size_t>(s)];
  }
  return out;
}

Model init_model(const TrainConfig& cfg, const std::vector<std::string>& task_vocab, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.task_vocab = task_vocab;
  if (!cfg.dense_baseline) {
    m.params.add("dict.content", rng.normal_tensor({cfg.M, cfg.C, cfg.K}, 0.1));
    m.params.add("dict.phi", rng.normal_tensor({cfg.M}, 1.0));
    m.params.add("dict.gamma", Tensor({cfg.M}));
  }
  flow::init_net_params(m.params, m.net_config(), rng);
  int64_t C = cfg.C;
  m.stats.mean.assign(static_cast<size_t>(C), 0.0);
  m.stats.stddev.assign(static_cast<size_t>(C), 1.0);
  m.stats.clamped.assign(static_cast<size_t>(C), false);
  return m;
}

JointLossResult joint_loss(ad::Tape& tape, const LeafMap& params, ad::Val logits,
                           const TrainSample& sample, const TrainConfig& cfg, Rng& rng,
                           dict::EvalMode mode) {
  flow::NetConfig nc;
  nc.tokens = cfg.dense_baseline ? cfg.C : cfg.M;
  nc.L = cfg.L;
  nc.d = cfg.d_model;
  nc.heads = cfg.heads;
  nc.blocks = cfg.blocks;
  nc.C = cfg.C;
  nc.n_tasks = -1;  // resolved below only when a task embedding exists

  legal::GeoParams gp = geo_params(cfg);
  // training truncates noise-level far pairs; the relaxed path must stay an
  // exact, kink-free function or central differences pick up the jumps
  gp.vacancy_cutoff = (mode == dict::EvalMode::Hard) ? 1e-12 : 0.0;

  JointLossResult out;

  if (params.has("enc.task_emb"))
    nc.n_tasks = static_cast<int>(tape.val(params.at("enc.task_emb")).dim(0));
  else
    nc.n_tasks = 0;

  auto context = [&](bool allow_drop) -> ad::Val {
    if (cfg.obs <= 0) return flow::null_context_node(tape, params);
    bool drop = allow_drop && rng.uniform() < cfg.guidance_dropout;
    if (drop || sample.x.dim(1) < cfg.obs) return flow::null_context_node(tape, params);
    Tensor prefix({cfg.C, cfg.obs});
    for (int64_t c = 0; c < cfg.C; ++c)
      for (int64_t t = 0; t < cfg.obs; ++t) prefix.at2(c, t) = sample.x.at2(c, t);
    int tid = nc.n_tasks > 0 ? sample.task_id : -1;
    return flow::encode_context_node(tape, params, nc, prefix, tid);
  };

  if (cfg.dense_baseline) {
    double tdraw = rng.uniform();
    Tensor Z0 = rng.normal_tensor({cfg.C, cfg.L}, cfg.sigma);
    ad::Val r1 = tape.constant(sample.x, "x_target");
    ad::Val z0 = tape.constant(Z0, "Z0");
    ad::Val zt = tape.add(tape.scale(z0, 1.0 - tdraw), tape.scale(r1, tdraw));
    ad::Val target = tape.sub(r1, z0);
    ad::Val h = context(true);
    ad::Val wsoft = tape.constant(
        Tensor::full({cfg.C}, static_cast<double>(cfg.L)), "wsoft_dense");
    ad::Val v = flow::velocity_forward(tape, params, nc, zt, tdraw, wsoft, h);
    ad::Val fm = tape.scale(tape.sq_norm(tape.sub(v, target)),
                            1.0 / static_cast<double>(cfg.C * cfg.L));
    out.total = fm;
    out.fm = fm;
    out.value.fm_residual = tape.val(fm)[0];
    out.value.total = tape.val(out.total)[0];
    return out;
  }

  // dictionary side
  ad::Val q = tape.sigmoid(logits);
  ad::Val Rdec = (mode == dict::EvalMode::Hard) ? tape.st_bernoulli(q, rng) : q;
  auto atoms = dict::build_effective_atoms(tape, params.at("dict.content"),
                                           params.at("dict.phi"), cfg.alpha, cfg.use_mask);
  ad::Val gate_dec = dict::wta_gate_node(tape, Rdec, params.at("dict.gamma"), atoms.widths, mode);
  auto psi_dec = legal::psi_total_node(tape, Rdec, gate_dec, atoms.masked, atoms.wsoft,
                                       atoms.widths, sample.x, gp, mode);

  // flow side
  double tdraw = rng.uniform();
  Tensor Z0 = rng.normal_tensor({cfg.M, cfg.L}, cfg.sigma);
  ad::Val z0 = tape.constant(Z0, "Z0");
  ad::Val zt = tape.add(tape.scale(z0, 1.0 - tdraw), tape.scale(Rdec, tdraw));
  ad::Val target = tape.sub(Rdec, z0);
  ad::Val h = context(true);
  ad::Val v = flow::velocity_forward(tape, params, nc, zt, tdraw, atoms.wsoft, h);
  ad::Val fm = tape.scale(tape.sq_norm(tape.sub(v, target)),
                          1.0 / static_cast<double>(cfg.M * cfg.L));
  ad::Val endpoint = tape.add(zt, tape.scale(v, 1.0 - tdraw));
  ad::Val Rflow = tape.clamp01(endpoint);
  ad::Val gate_flow =
      dict::wta_gate_node(tape, Rflow, params.at("dict.gamma"), atoms.widths, mode);
  auto psi_flow = legal::psi_total_node(tape, Rflow, gate_flow, atoms.masked, atoms.wsoft,
                                        atoms.widths, sample.x, gp, mode);

  out.total = tape.add(tape.add(psi_dec.total, fm), tape.scale(psi_flow.total, cfg.beta));
  out.fm = fm;
  out.dec_terms = psi_dec;
  out.flow_terms = psi_flow;
  out.value.psi_dec = psi_dec.value;
  out.value.fm_residual = tape.val(fm)[0];
  out.value.psi_flow = psi_flow.value;
  out.value.total = tape.val(out.total)[0];
  return out;
}

namespace {

struct AdamState {
  ParamStore m, v;
};

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, double lr, int64_t t) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (int64_t i = 0; i < p.numel(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

double group_lr(const std::string& name, const TrainConfig& cfg) {
  if (name.rfind("dict.", 0) == 0) return cfg.lr_dict;
  return cfg.lr_theta;
}

Tensor table_row(const Tensor& table, int64_t i, int64_t M, int64_t L) {
  Tensor row({M, L});
  const double* src = table.data.data() + i * M * L;
  std::copy(src, src + M * L, row.data.begin());
  return row;
}

void add_into_row(Tensor& table, int64_t i, const Tensor& row, int64_t M, int64_t L) {
  double* dst = table.data.data() + i * M * L;
  for (int64_t k = 0; k < M * L; ++k) dst[k] = row[k];
}

const char* worst_term(const LossBreakdown& b) {
  if (!std::isfinite(b.psi_dec.total)) return "psi_dec";
  if (!std::isfinite(b.fm_residual)) return "fm_residual";
  if (!std::isfinite(b.psi_flow.total)) return "psi_flow";
  return "total";
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                  const std::vector<std::string>& task_vocab) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("train: empty dataset");
  Rng rng(cfg.seed);
  TrainResult res;
  res.model = init_model(cfg, task_vocab, rng);
  Model& model = res.model;

  int64_t N = static_cast<int64_t>(samples.size());
  int64_t M = cfg.M, L = cfg.L;
  if (!cfg.dense_baseline) {
    res.logits.table = Tensor::full({N, M, L}, cfg.init_logit);
    res.logits.adam_m = Tensor({N, M, L});
    res.logits.adam_v = Tensor({N, M, L});
    res.logits.steps.assign(static_cast<size_t>(N), 0);
  }
  for (auto& [name, t] : model.params.items) {
    res.adam_m.add(name, Tensor::zeros(t.shape));
    res.adam_v.add(name, Tensor::zeros(t.shape));
  }

  // last-good snapshot for the divergence guard
  ParamStore good_params = model.params;
  LogitTable good_logits = res.logits;
  ParamStore good_m = res.adam_m, good_v = res.adam_v;
  int64_t good_step = model.step;

  std::vector<int64_t> order(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) order[static_cast<size_t>(i)] = i;

  int threads = std::max(1, cfg.threads);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the main stream
    for (int64_t i = N - 1; i > 0; --i) {
      int64_t j = rng.uniform_int(0, i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    EpochStats es;
    es.epoch = epoch;
    bool bad = false;
    std::string bad_term;

    for (int64_t start = 0; start < N && !bad; start += cfg.batch_size) {
      int64_t bsz = std::min<int64_t>(cfg.batch_size, N - start);
      // per-sample sub-streams drawn up front keep any thread count on the
      // same random sequence
      std::vector<uint64_t> seeds(static_cast<size_t>(bsz));
      for (auto& s : seeds) s = rng.raw();

      std::vector<LossBreakdown> losses(static_cast<size_t>(bsz));
      std::vector<Tensor> logit_grads(static_cast<size_t>(bsz));
      std::vector<ParamStore> chunk_grads;

      int T = static_cast<int>(std::min<int64_t>(threads, bsz));
      chunk_grads.resize(static_cast<size_t>(T));
      for (int c = 0; c < T; ++c)
        for (auto& [name, t] : model.params.items)
          chunk_grads[static_cast<size_t>(c)].add(name, Tensor::zeros(t.shape));

      auto run_chunk = [&](int c) {
        int64_t lo = start + bsz * c / T, hi = start + bsz * (c + 1) / T;
        for (int64_t b = lo; b < hi; ++b) {
          int64_t idx = order[static_cast<size_t>(b)];
          Rng srng(seeds[static_cast<size_t>(b - start)]);
          ad::Tape tape;
          LeafMap leafs = leaf_all(tape, model.params);
          ad::Val lg{};
          if (!cfg.dense_baseline)
            lg = tape.leaf(table_row(res.logits.table, idx, M, L), "logits");
          auto jl = joint_loss(tape, leafs, lg, samples[static_cast<size_t>(idx)], cfg, srng,
                               dict::EvalMode::Hard);
          losses[static_cast<size_t>(b - start)] = jl.value;
          if (!std::isfinite(jl.value.total) || jl.value.total > 1e6) continue;
          tape.backward(jl.total);
          ParamStore& acc = chunk_grads[static_cast<size_t>(c)];
          for (size_t pi = 0; pi < leafs.items.size(); ++pi) {
            const Tensor& g = tape.grad(leafs.items[pi].second);
            Tensor& a = acc.items[pi].second;
            for (int64_t k = 0; k < g.numel(); ++k) a[k] += g[k];
          }
          if (!cfg.dense_baseline) logit_grads[static_cast<size_t>(b - start)] = tape.grad(lg);
        }
      };
      if (T == 1) {
        run_chunk(0);
      } else {
        std::vector<std::thread> pool;
        for (int c = 0; c < T; ++c) pool.emplace_back(run_chunk, c);
        for (auto& th : pool) th.join();
      }

      for (const auto& lb : losses) {
        if (!std::isfinite(lb.total) || lb.total > 1e6) {
          bad = true;
          bad_term = worst_term(lb);
          break;
        }
        es.psi_dec += lb.psi_dec.total;
        es.fm_residual += lb.fm_residual;
        es.psi_flow += lb.psi_flow.total;
        es.total += lb.total;
      }
      if (bad) break;

      ++model.step;
      double inv = 1.0 / static_cast<double>(bsz);
      for (size_t pi = 0; pi < model.params.items.size(); ++pi) {
        Tensor g = chunk_grads[0].items[pi].second;
        for (int c = 1; c < T; ++c) {
          const Tensor& gc = chunk_grads[static_cast<size_t>(c)].items[pi].second;
          for (int64_t k = 0; k < g.numel(); ++k) g[k] += gc[k];
        }
        for (int64_t k = 0; k < g.numel(); ++k) g[k] *= inv;
        auto& [name, p] = model.params.items[pi];
        adam_step(p, g, res.adam_m.items[pi].second, res.adam_v.items[pi].second,
                  group_lr(name, cfg), model.step);
      }
      if (!cfg.dense_baseline) {
        for (int64_t b = 0; b < bsz; ++b) {
          if (logit_grads[static_cast<size_t>(b)].numel() == 0) continue;
          int64_t idx = order[static_cast<size_t>(start + b)];
          Tensor row = table_row(res.logits.table, idx, M, L);
          Tensor mrow = table_row(res.logits.adam_m, idx, M, L);
          Tensor vrow = table_row(res.logits.adam_v, idx, M, L);
          int64_t t = ++res.logits.steps[static_cast<size_t>(idx)];
          adam_step(row, logit_grads[static_cast<size_t>(b)], mrow, vrow, cfg.lr_logits, t);
          add_into_row(res.logits.table, idx, row, M, L);
          add_into_row(res.logits.adam_m, idx, mrow, M, L);
          add_into_row(res.logits.adam_v, idx, vrow, M, L);
        }
      }
    }

    if (bad) {
      model.params = good_params;
      res.logits = good_logits;
      res.adam_m = good_m;
      res.adam_v = good_v;
      model.step = good_step;
      res.diverged = true;
      res.divergence_term = bad_term;
      break;
    }

    double nb = static_cast<double>(N);
    es.psi_dec /= nb;
    es.fm_residual /= nb;
    es.psi_flow /= nb;
    es.total /= nb;
    if (!cfg.dense_baseline) {
      int used = 0;
      for (int64_t j = 0; j < M; ++j) {
        bool hit = false;
        for (int64_t i = 0; i < N && !hit; ++i)
          for (int64_t k = 0; k < L; ++k)
            if (res.logits.table[(i * M + j) * L + k] > 0.0) {  // q > 0.5
              hit = true;
              break;
            }
        if (hit) ++used;
      }
      es.utilization = static_cast<double>(used) / static_cast<double>(M);
    }
    res.log.push_back(es);

    good_params = model.params;
    good_logits = res.logits;
    good_m = res.adam_m;
    good_v = res.adam_v;
    good_step = model.step;
  }
  return res;
}

Prediction predict(const Model& model, const Tensor& prefix_raw, const std::string& task,
                   int steps, double guidance, uint64_t seed) {
  const TrainConfig& cfg = model.cfg;
  if (cfg.obs <= 0) throw std::invalid_argument("predict: model is unconditional");
  if (prefix_raw.dim(0) != cfg.C || prefix_raw.dim(1) != cfg.obs)
    throw std::invalid_argument("predict: prefix must be C x obs");
  Tensor prefix = data::normalize_points(prefix_raw, model.stats);
  int tid = model.task_id(task);
  Tensor h = flow::encode_context(model.params, model.net_config(), prefix, tid);

  Rng rng(seed);
  flow::Sampler s{&model.params, model.net_config(), model.soft_widths()};
  Tensor Z0 = rng.normal_tensor({s.cfg.tokens, cfg.L}, cfg.sigma);
  Tensor Z1 = flow::integrate(s, Z0, steps, &h, guidance);

  Prediction pred;
  int64_t F = cfg.L - cfg.obs;
  if (cfg.dense_baseline) {
    Tensor fut({cfg.C, F});
    for (int64_t c = 0; c < cfg.C; ++c)
      for (int64_t t = 0; t < F; ++t) fut.at2(c, t) = Z1.at2(c, cfg.obs + t);
    pred.future = data::denormalize_points(fut, model.stats);
    return pred;
  }

  pred.placements = flow::binarize(Z1, 0.5);
  auto widths = model.widths();
  const Tensor& gamma = model.params.at("dict.gamma");
  std::vector<double> gvec(gamma.data.begin(), gamma.data.end());
  pred.gate = dict::wta_gate(pred.placements, widths, gvec);
  bool any = false;
  for (double v : pred.placements.data)
    if (v != 0.0) {
      any = true;
      break;
    }
  if (!any) {
    pred.fallback = true;
    Tensor fut({cfg.C, F});
    for (int64_t c = 0; c < cfg.C; ++c)
      for (int64_t t = 0; t < F; ++t) fut.at2(c, t) = prefix_raw.at2(c, cfg.obs - 1);
    pred.future = fut;  // already in dataset units
    return pred;
  }
  Tensor xhat = dict::synthesize(model.masked_atoms(), widths, pred.placements, pred.gate);
  Tensor fut({cfg.C, F});
  for (int64_t c = 0; c < cfg.C; ++c)
    for (int64_t t = 0; t < F; ++t) fut.at2(c, t) = xhat.at2(c, cfg.obs + t);
  pred.future = data::denormalize_points(fut, model.stats);
  return pred;
}

Tensor sample_trajectory(const Model& model, int steps, Rng& rng) {
  const TrainConfig& cfg = model.cfg;
  flow::Sampler s{&model.params, model.net_config(), model.soft_widths()};
  Tensor Z0 = rng.normal_tensor({s.cfg.tokens, cfg.L}, cfg.sigma);
  Tensor Z1 = flow::integrate(s, Z0, steps, nullptr, 1.0);
  if (cfg.dense_baseline) return data::denormalize_points(Z1, model.stats);
  Tensor R = flow::binarize(Z1, 0.5);
  auto widths = model.widths();
  const Tensor& gamma = model.params.at("dict.gamma");
  std::vector<double> gvec(gamma.data.begin(), gamma.data.end());
  Tensor gate = dict::wta_gate(R, widths, gvec);
  Tensor xhat = dict::synthesize(model.masked_atoms(), widths, R, gate);
  return data::denormalize_points(xhat, model.stats);
}

Tensor infer_logits(const Model& model, const Tensor& x_norm, int opt_steps, double lr,
                    uint64_t seed) {
  const TrainConfig& cfg = model.cfg;
  if (cfg.dense_baseline) throw std::invalid_argument("infer_logits: dense model has no logits");
  Tensor row = Tensor::full({cfg.M, cfg.L}, cfg.init_logit);
  Tensor m(row.shape), v(row.shape);
  Rng rng(seed);
  TrainSample sample{x_norm, -1};
  TrainConfig c2 = cfg;
  c2.obs = 0;  // reconstruction only
  for (int it = 1; it <= opt_steps; ++it) {
    ad::Tape tape;
    LeafMap leafs = leaf_all(tape, model.params);
    ad::Val lg = tape.leaf(row, "logits");
    auto jl = joint_loss(tape, leafs, lg, sample, c2, rng, dict::EvalMode::Hard);
    tape.backward(jl.total);
    adam_step(row, tape.grad(lg), m, v, lr, it);
  }
  return row;
}

}  // namespace primflow::train
