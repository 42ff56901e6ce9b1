#pragma once

#include <map>
#include <string>

namespace primflow {

/// Flat `key = value` text, one pair per line, '#' comments.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> load_kv_file(const std::string& path);
std::string serialize_kv(const std::map<std::string, std::string>& kv);

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key, double dflt);
int64_t kv_int(const std::map<std::string, std::string>& kv, const std::string& key, int64_t dflt);
bool kv_bool(const std::map<std::string, std::string>& kv, const std::string& key, bool dflt);
std::string kv_str(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& dflt);

}  // namespace primflow
