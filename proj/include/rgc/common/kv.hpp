#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rgc/common/error.hpp"

namespace rgc {

/// Whitespace-separated key=value tokens; tokens without '=' are ignored.
inline std::map<std::string, std::string> parse_kv_tokens(std::string_view line) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

inline const std::string& kv_required(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  require(it != kv.end(), ErrorKind::kIo, "missing field '" + key + "'");
  return it->second;
}

inline std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& v = kv_required(kv, key);
  try {
    std::size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    require(used == v.size(), ErrorKind::kIo, "field '" + key + "' is not an integer: " + v);
    return static_cast<std::size_t>(x);
  } catch (const std::logic_error&) {
    fail(ErrorKind::kIo, "field '" + key + "' is not an integer: " + v);
  }
}

inline double kv_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& v = kv_required(kv, key);
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    require(used == v.size(), ErrorKind::kIo, "field '" + key + "' is not a number: " + v);
    return x;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kIo, "field '" + key + "' is not a number: " + v);
  }
}

inline std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::istringstream in(csv);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      out.push_back(std::stoul(part));
    } catch (const std::logic_error&) {
      fail(ErrorKind::kIo, "bad integer list '" + csv + "'");
    }
  }
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

}  // namespace rgc
