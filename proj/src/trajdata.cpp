#include "primflow/trajdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace primflow::data {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, size_t line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc{} && res.ptr == e;
}

bool parse_int(const std::string& s, int64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc{} && res.ptr == e;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Accum {
  std::string task;
  std::vector<int64_t> ts;
  std::vector<std::vector<double>> rows;  // per timestep, C values
};

std::vector<Trajectory> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  size_t lineno = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "traj_id" || header[1] != "task_id" || header[2] != "t")
    parse_fail(path, lineno, "expected header traj_id,task_id,t,c0..");
  int64_t C = static_cast<int64_t>(header.size()) - 3;
  for (int64_t c = 0; c < C; ++c)
    if (header[static_cast<size_t>(3 + c)] != "c" + std::to_string(c))
      parse_fail(path, lineno, "missing column c" + std::to_string(c));

  std::map<std::string, Accum> acc;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (static_cast<int64_t>(f.size()) != C + 3) parse_fail(path, lineno, "wrong field count");
    int64_t t;
    if (!parse_int(f[2], t)) parse_fail(path, lineno, "non-integer timestep '" + f[2] + "'");
    auto it = acc.find(f[0]);
    if (it == acc.end()) {
      order.push_back(f[0]);
      it = acc.emplace(f[0], Accum{f[1], {}, {}}).first;
    } else {
      if (!it->second.ts.empty() && t == it->second.ts.back())
        parse_fail(path, lineno, "duplicate (id,t) = (" + f[0] + "," + std::to_string(t) + ")");
      if (!it->second.ts.empty() && t < it->second.ts.back())
        parse_fail(path, lineno, "rows of id " + f[0] + " not sorted by t");
    }
    std::vector<double> row(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      if (!parse_double(f[static_cast<size_t>(3 + c)], row[static_cast<size_t>(c)]))
        parse_fail(path, lineno,
                   "non-numeric coordinate c" + std::to_string(c) + " = '" +
                       f[static_cast<size_t>(3 + c)] + "'");
    }
    it->second.ts.push_back(t);
    it->second.rows.push_back(std::move(row));
  }

  std::vector<Trajectory> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const Accum& a = acc[id];
    int64_t T = static_cast<int64_t>(a.rows.size());
    Tensor pts({C, T});
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c)
        pts.at2(c, t) = a.rows[static_cast<size_t>(t)][static_cast<size_t>(c)];
    out.push_back(Trajectory{id, a.task, std::move(pts)});
  }
  return out;
}

std::vector<Trajectory> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Trajectory> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(path, lineno, e.what());
    }
    if (!j.contains("id") || !j.contains("points")) parse_fail(path, lineno, "missing id/points");
    auto& pts = j["points"];
    int64_t T = static_cast<int64_t>(pts.size());
    if (T == 0) parse_fail(path, lineno, "empty points");
    int64_t C = static_cast<int64_t>(pts[0].size());
    Tensor m({C, T});
    for (int64_t t = 0; t < T; ++t) {
      auto& row = pts[static_cast<size_t>(t)];
      if (static_cast<int64_t>(row.size()) != C) parse_fail(path, lineno, "ragged points");
      for (int64_t c = 0; c < C; ++c) {
        if (!row[static_cast<size_t>(c)].is_number()) parse_fail(path, lineno, "non-numeric point");
        m.at2(c, t) = row[static_cast<size_t>(c)].get<double>();
      }
    }
    out.push_back(Trajectory{j["id"].get<std::string>(),
                             j.value("task", std::string{}), std::move(m)});
  }
  return out;
}

}  // namespace

FileFormat format_from_path(const std::string& path) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") return FileFormat::Jsonl;
  return FileFormat::Csv;
}

std::vector<Trajectory> load_trajectories(const std::string& path, FileFormat format) {
  return format == FileFormat::Csv ? load_csv(path) : load_jsonl(path);
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path,
                       FileFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (format == FileFormat::Csv) {
    int64_t C = trajs.empty() ? 0 : trajs[0].channels();
    out << "traj_id,task_id,t";
    for (int64_t c = 0; c < C; ++c) out << ",c" << c;
    out << "\n";
    for (const auto& tr : trajs) {
      for (int64_t t = 0; t < tr.length(); ++t) {
        out << tr.id << "," << tr.task << "," << t;
        for (int64_t c = 0; c < C; ++c) out << "," << fmt_double(tr.points.at2(c, t));
        out << "\n";
      }
    }
  } else {
    for (const auto& tr : trajs) {
      json pts = json::array();
      for (int64_t t = 0; t < tr.length(); ++t) {
        json row = json::array();
        for (int64_t c = 0; c < tr.channels(); ++c) row.push_back(tr.points.at2(c, t));
        pts.push_back(std::move(row));
      }
      json j{{"id", tr.id}, {"task", tr.task}, {"points", std::move(pts)}};
      out << j.dump() << "\n";
    }
  }
}

std::vector<WindowSample> window(const std::vector<Trajectory>& dataset, int total, int obs,
                                 int stride) {
  if (!(0 < obs && obs < total)) throw std::invalid_argument("window: need 0 < obs < total");
  if (stride < 1) throw std::invalid_argument("window: stride >= 1");
  std::vector<WindowSample> out;
  for (const auto& tr : dataset) {
    int64_t T = tr.length();
    for (int64_t off = 0; off + total <= T; off += stride) {
      Tensor o({tr.channels(), obs}), f({tr.channels(), total - obs});
      for (int64_t c = 0; c < tr.channels(); ++c) {
        for (int64_t t = 0; t < obs; ++t) o.at2(c, t) = tr.points.at2(c, off + t);
        for (int64_t t = obs; t < total; ++t) f.at2(c, t - obs) = tr.points.at2(c, off + t);
      }
      out.push_back(WindowSample{std::move(o), std::move(f), tr.id, tr.task, off});
    }
  }
  return out;
}

NormStats compute_norm_stats(const std::vector<Trajectory>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("normalize: empty dataset");
  int64_t C = dataset[0].channels();
  NormStats st;
  st.mean.assign(static_cast<size_t>(C), 0.0);
  st.stddev.assign(static_cast<size_t>(C), 0.0);
  st.clamped.assign(static_cast<size_t>(C), false);
  int64_t n = 0;
  for (const auto& tr : dataset) {
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < tr.length(); ++t) st.mean[static_cast<size_t>(c)] += tr.points.at2(c, t);
    n += tr.length();
  }
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (const auto& tr : dataset)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < tr.length(); ++t) {
        double d = tr.points.at2(c, t) - st.mean[static_cast<size_t>(c)];
        st.stddev[static_cast<size_t>(c)] += d * d;
      }
  for (int64_t c = 0; c < C; ++c) {
    double v = std::sqrt(st.stddev[static_cast<size_t>(c)] / static_cast<double>(n));
    if (v < 1e-12) {
      st.stddev[static_cast<size_t>(c)] = 1.0;
      st.clamped[static_cast<size_t>(c)] = true;
    } else {
      st.stddev[static_cast<size_t>(c)] = v;
    }
  }
  return st;
}

Tensor normalize_points(const Tensor& points, const NormStats& stats) {
  Tensor out = points;
  int64_t C = points.dim(0);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < points.dim(1); ++t)
      out.at2(c, t) = (points.at2(c, t) - stats.mean[static_cast<size_t>(c)]) /
                      stats.stddev[static_cast<size_t>(c)];
  return out;
}

Tensor denormalize_points(const Tensor& points, const NormStats& stats) {
  Tensor out = points;
  int64_t C = points.dim(0);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < points.dim(1); ++t)
      out.at2(c, t) = points.at2(c, t) * stats.stddev[static_cast<size_t>(c)] +
                      stats.mean[static_cast<size_t>(c)];
  return out;
}

std::vector<Trajectory> normalize(const std::vector<Trajectory>& dataset, const NormStats& stats) {
  std::vector<Trajectory> out;
  out.reserve(dataset.size());
  for (const auto& tr : dataset)
    out.push_back(Trajectory{tr.id, tr.task, normalize_points(tr.points, stats)});
  return out;
}

std::pair<std::vector<Trajectory>, SynthTruth> synth_generate(const SynthSpec& spec) {
  if (spec.K < 1 || spec.K > spec.L || spec.noise_std < 0.0 || spec.M_true < 1)
    throw std::invalid_argument("synth: invalid spec");
  Rng rng(spec.seed);
  SynthTruth truth;

  // Atoms are smooth sinusoid mixtures that start and end at the origin, so
  // any tiling is endpoint-matched and the truth dictionary reconstructs
  // every trajectory by pure placement.
  int min_len = std::max(2, spec.K - 6);
  for (int j = 0; j < spec.M_true; ++j) {
    int k = static_cast<int>(rng.uniform_int(min_len, spec.K));
    Tensor atom({spec.C, k});
    for (int64_t c = 0; c < spec.C; ++c) {
      double a = 0.7 * rng.normal();
      double b = 0.7 * rng.normal();
      for (int64_t s = 0; s < k; ++s) {
        double u = static_cast<double>(s) / static_cast<double>(k - 1);
        atom.at2(c, s) = a * std::sin(M_PI * u) + b * std::sin(2.0 * M_PI * u);
      }
    }
    truth.atoms.push_back(std::move(atom));
  }

  // Optional task templates: a fixed atom sequence per task.
  std::vector<std::vector<int>> templates;
  for (int q = 0; q < spec.n_tasks; ++q) {
    std::vector<int> seq;
    int covered = 0;
    while (covered < spec.L) {
      int j = static_cast<int>(rng.uniform_int(0, spec.M_true - 1));
      seq.push_back(j);
      covered += truth.atoms[static_cast<size_t>(j)].dim(1);
    }
    templates.push_back(std::move(seq));
  }

  std::vector<Trajectory> trajs;
  trajs.reserve(static_cast<size_t>(spec.n_trajectories));
  for (int i = 0; i < spec.n_trajectories; ++i) {
    Tensor pts({spec.C, spec.L});
    std::vector<SynthEvent> events;
    std::vector<double> carry(static_cast<size_t>(spec.C), 0.0);
    int task = -1;
    size_t tpos = 0;
    if (spec.n_tasks > 0) task = static_cast<int>(rng.uniform_int(0, spec.n_tasks - 1));
    int onset = 0;
    while (onset < spec.L) {
      int j;
      if (task >= 0) {
        j = templates[static_cast<size_t>(task)][tpos++];
      } else {
        j = static_cast<int>(rng.uniform_int(0, spec.M_true - 1));
      }
      const Tensor& atom = truth.atoms[static_cast<size_t>(j)];
      int k = static_cast<int>(atom.dim(1));
      int len = std::min(k, spec.L - onset);
      for (int64_t c = 0; c < spec.C; ++c) {
        double shift = carry[static_cast<size_t>(c)] - atom.at2(c, 0);
        for (int64_t s = 0; s < len; ++s) pts.at2(c, onset + s) = atom.at2(c, s) + shift;
      }
      for (int64_t c = 0; c < spec.C; ++c)
        carry[static_cast<size_t>(c)] = pts.at2(c, onset + len - 1);
      events.push_back(SynthEvent{j, onset, len});
      onset += len;
    }
    if (spec.noise_std > 0.0)
      for (double& x : pts.data) x += spec.noise_std * rng.normal();
    std::string id = "traj" + std::to_string(i);
    std::string tname = task >= 0 ? "task" + std::to_string(task) : "rand";
    trajs.push_back(Trajectory{id, tname, std::move(pts)});
    truth.events.push_back(std::move(events));
    truth.task_of.push_back(task);
  }
  return {std::move(trajs), std::move(truth)};
}

void save_truth(const SynthTruth& truth, const std::string& path) {
  json atoms = json::array();
  for (const auto& a : truth.atoms) {
    json ch = json::array();
    for (int64_t c = 0; c < a.dim(0); ++c) {
      json row = json::array();
      for (int64_t s = 0; s < a.dim(1); ++s) row.push_back(a.at2(c, s));
      ch.push_back(std::move(row));
    }
    atoms.push_back(std::move(ch));
  }
  json events = json::array();
  for (const auto& evs : truth.events) {
    json per = json::array();
    for (const auto& e : evs) per.push_back(json::array({e.atom, e.onset, e.length}));
    events.push_back(std::move(per));
  }
  json j{{"atoms", std::move(atoms)}, {"events", std::move(events)}, {"task_of", truth.task_of}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

SynthTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  SynthTruth truth;
  for (const auto& a : j["atoms"]) {
    int64_t C = static_cast<int64_t>(a.size());
    int64_t k = static_cast<int64_t>(a[0].size());
    Tensor atom({C, k});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < k; ++s)
        atom.at2(c, s) = a[static_cast<size_t>(c)][static_cast<size_t>(s)].get<double>();
    truth.atoms.push_back(std::move(atom));
  }
  for (const auto& per : j["events"]) {
    std::vector<SynthEvent> evs;
    for (const auto& e : per) evs.push_back(SynthEvent{e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
    truth.events.push_back(std::move(evs));
  }
  truth.task_of = j["task_of"].get<std::vector<int>>();
  return truth;
}

}  // namespace primflow::data
