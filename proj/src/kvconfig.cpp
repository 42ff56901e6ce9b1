#include "primflow/kvconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace primflow {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

std::string serialize_kv(const std::map<std::string, std::string>& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  return out.str();
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 double dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::runtime_error("config key '" + key + "': bad number '" + it->second + "'");
  }
}

int64_t kv_int(const std::map<std::string, std::string>& kv, const std::string& key, int64_t dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::runtime_error("config key '" + key + "': bad integer '" + it->second + "'");
  }
}

bool kv_bool(const std::map<std::string, std::string>& kv, const std::string& key, bool dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config key '" + key + "': bad bool '" + it->second + "'");
}

std::string kv_str(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

}  // namespace primflow
