#include "btmpg/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace btmpg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " has no '='");
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " has an empty key");
    kv[key] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

const std::string* ConfigReader::fetch(const std::string& key) {
  seen_.insert(key);
  auto it = kv_.find(key);
  return it == kv_.end() ? nullptr : &it->second;
}

bool ConfigReader::has(const std::string& key) { return fetch(key) != nullptr; }

std::string ConfigReader::text(const std::string& key, const std::string& fallback) {
  const std::string* v = fetch(key);
  return v ? *v : fallback;
}

double ConfigReader::number(const std::string& key, double fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(*v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v->size())
    throw std::invalid_argument("config: " + key + " wants a number, got '" + *v + "'");
  return out;
}

int ConfigReader::integer(const std::string& key, int fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  std::size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(*v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v->size())
    throw std::invalid_argument("config: " + key + " wants an integer, got '" + *v + "'");
  return static_cast<int>(out);
}

std::uint64_t ConfigReader::unsigned64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(*v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v->size())
    throw std::invalid_argument("config: " + key + " wants an unsigned integer, got '" +
                                *v + "'");
  return out;
}

bool ConfigReader::flag(const std::string& key, bool fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  throw std::invalid_argument("config: " + key + " wants a boolean, got '" + *v + "'");
}

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

std::vector<int> ConfigReader::int_list(const std::string& key, std::vector<int> fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  std::vector<int> out;
  const std::string whole = trim(*v);
  if (whole.empty()) return out;  // explicit empty list
  for (const std::string& part : split_commas(whole)) {
    const std::string p = trim(part);
    std::size_t pos = 0;
    long val = 0;
    try {
      val = std::stol(p, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (p.empty() || pos != p.size())
      throw std::invalid_argument("config: " + key + " wants integers, got '" + *v + "'");
    out.push_back(static_cast<int>(val));
  }
  return out;
}

std::vector<double> ConfigReader::number_list(const std::string& key,
                                              std::vector<double> fallback) {
  const std::string* v = fetch(key);
  if (!v) return fallback;
  std::vector<double> out;
  const std::string whole = trim(*v);
  if (whole.empty()) return out;
  for (const std::string& part : split_commas(whole)) {
    const std::string p = trim(part);
    std::size_t pos = 0;
    double val = 0.0;
    try {
      val = std::stod(p, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (p.empty() || pos != p.size())
      throw std::invalid_argument("config: " + key + " wants numbers, got '" + *v + "'");
    out.push_back(val);
  }
  return out;
}

std::vector<std::string> ConfigReader::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_)
    if (!seen_.count(k)) out.push_back(k);
  return out;
}

}  // namespace btmpg
