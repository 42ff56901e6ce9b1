#include "primflow/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "primflow/kvconfig.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace primflow::train {

namespace {

constexpr const char* kMagic = "PRIMFLOW-CKPT v0001";

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const TrainResult& result, const std::string& rng_state) {
  Checkpoint ck;
  ck.cfg = result.model.cfg;
  ck.task_vocab = result.model.task_vocab;
  ck.rng_state = rng_state;
  ck.step = result.model.step;
  for (const auto& [name, t] : result.model.params.items) ck.tensors.add(name, t);

  const auto& st = result.model.stats;
  int64_t C = static_cast<int64_t>(st.mean.size());
  Tensor mean({C}), stddev({C}), clamped({C});
  for (int64_t c = 0; c < C; ++c) {
    mean[c] = st.mean[static_cast<size_t>(c)];
    stddev[c] = st.stddev[static_cast<size_t>(c)];
    clamped[c] = st.clamped[static_cast<size_t>(c)] ? 1.0 : 0.0;
  }
  ck.tensors.add("stats.mean", std::move(mean));
  ck.tensors.add("stats.std", std::move(stddev));
  ck.tensors.add("stats.clamped", std::move(clamped));

  if (!result.model.cfg.dense_baseline && result.logits.table.numel() > 0) {
    ck.tensors.add("logits.table", result.logits.table);
    ck.tensors.add("logits.adam_m", result.logits.adam_m);
    ck.tensors.add("logits.adam_v", result.logits.adam_v);
    Tensor steps({static_cast<int64_t>(result.logits.steps.size())});
    for (size_t i = 0; i < result.logits.steps.size(); ++i)
      steps[static_cast<int64_t>(i)] = static_cast<double>(result.logits.steps[i]);
    ck.tensors.add("logits.steps", std::move(steps));
  }
  for (const auto& [name, t] : result.adam_m.items) ck.tensors.add("adam_m." + name, t);
  for (const auto& [name, t] : result.adam_v.items) ck.tensors.add("adam_v." + name, t);
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Model m;
  m.cfg = ck.cfg;
  m.task_vocab = ck.task_vocab;
  m.step = ck.step;
  for (const auto& [name, t] : ck.tensors.items) {
    if (name.rfind("stats.", 0) == 0 || name.rfind("logits.", 0) == 0 ||
        name.rfind("adam_m.", 0) == 0 || name.rfind("adam_v.", 0) == 0)
      continue;
    m.params.add(name, t);
  }
  const Tensor& mean = ck.tensors.at("stats.mean");
  const Tensor& stddev = ck.tensors.at("stats.std");
  const Tensor& clamped = ck.tensors.at("stats.clamped");
  for (int64_t c = 0; c < mean.numel(); ++c) {
    m.stats.mean.push_back(mean[c]);
    m.stats.stddev.push_back(stddev[c]);
    m.stats.clamped.push_back(clamped[c] != 0.0);
  }
  return m;
}

TrainResult result_from_checkpoint(const Checkpoint& ck) {
  TrainResult res;
  res.model = model_from_checkpoint(ck);
  if (ck.tensors.has("logits.table")) {
    res.logits.table = ck.tensors.at("logits.table");
    res.logits.adam_m = ck.tensors.at("logits.adam_m");
    res.logits.adam_v = ck.tensors.at("logits.adam_v");
    const Tensor& steps = ck.tensors.at("logits.steps");
    for (int64_t i = 0; i < steps.numel(); ++i)
      res.logits.steps.push_back(static_cast<int64_t>(steps[i]));
  }
  for (const auto& [name, t] : ck.tensors.items) {
    if (name.rfind("adam_m.", 0) == 0) res.adam_m.add(name.substr(7), t);
    if (name.rfind("adam_v.", 0) == 0) res.adam_v.add(name.substr(7), t);
  }
  return res;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  auto kv = ck.cfg.to_kv();
  kv["tasks"] = join(ck.task_vocab, ',');
  kv["step"] = std::to_string(ck.step);
  std::string cfg_text = serialize_kv(kv);
  size_t nlines = static_cast<size_t>(std::count(cfg_text.begin(), cfg_text.end(), '\n'));

  out << kMagic << "\n";
  out << "config " << nlines << "\n" << cfg_text;
  out << "rng " << (ck.rng_state.empty() ? "-" : ck.rng_state) << "\n";
  out << "tensors " << ck.tensors.items.size() << "\n";
  for (const auto& [name, t] : ck.tensors.items) {
    out << name << " f64 " << t.rank();
    for (int64_t d : t.shape) out << " " << d;
    out << "\n";
  }
  out << "BINARY\n";
  for (const auto& [name, t] : ck.tensors.items)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write for checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw std::runtime_error("checkpoint " + path + ": unsupported magic/version '" + line + "'");
  Checkpoint ck;

  if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
    throw std::runtime_error("checkpoint: missing config section");
  size_t nlines = std::stoull(line.substr(7));
  std::string cfg_text;
  for (size_t i = 0; i < nlines; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated config");
    cfg_text += line + "\n";
  }
  auto kv = parse_kv_text(cfg_text);
  ck.cfg = TrainConfig::from_kv(kv);
  ck.step = kv_int(kv, "step", 0);
  std::string tasks = kv_str(kv, "tasks", "");
  ck.task_vocab = split(tasks, ',');

  if (!std::getline(in, line) || line.rfind("rng ", 0) != 0)
    throw std::runtime_error("checkpoint: missing rng line");
  ck.rng_state = line.substr(4);
  if (ck.rng_state == "-") ck.rng_state.clear();

  if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0)
    throw std::runtime_error("checkpoint: missing tensor table");
  size_t ntensors = std::stoull(line.substr(8));
  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
  };
  std::vector<Entry> entries;
  for (size_t i = 0; i < ntensors; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated tensor table");
    std::istringstream ls(line);
    Entry e;
    std::string dtype;
    int rank;
    ls >> e.name >> dtype >> rank;
    if (ls.fail() || dtype != "f64")
      throw std::runtime_error("checkpoint: bad tensor entry '" + line + "'");
    for (int r = 0; r < rank; ++r) {
      int64_t d;
      ls >> d;
      if (ls.fail()) throw std::runtime_error("checkpoint: bad shape for tensor '" + e.name + "'");
      e.shape.push_back(d);
    }
    entries.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "BINARY")
    throw std::runtime_error("checkpoint: missing BINARY marker");
  for (auto& e : entries) {
    Tensor t(e.shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(double)))
      throw std::runtime_error("checkpoint: truncated payload for tensor '" + e.name + "'");
    ck.tensors.add(e.name, std::move(t));
  }

  // structural consistency with the stored config
  if (!ck.cfg.dense_baseline) {
    const Tensor* c = ck.tensors.find("dict.content");
    if (!c) throw std::runtime_error("checkpoint: missing tensor 'dict.content'");
    if (c->rank() != 3 || c->dim(0) != ck.cfg.M || c->dim(1) != ck.cfg.C || c->dim(2) != ck.cfg.K)
      throw std::runtime_error("checkpoint: shape mismatch for tensor 'dict.content'");
  }
  return ck;
}

}  // namespace primflow::train
