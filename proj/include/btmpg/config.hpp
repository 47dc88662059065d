#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace btmpg {

// Flat key=value settings: one pair per line, '#' opens a comment, blank
// lines are skipped, whitespace around keys and values is trimmed. A later
// duplicate key wins. Lines without '=' are an error naming the line.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

// Typed access that remembers which keys were asked for, so whatever is
// left over can be rejected as unknown. Parse failures throw naming the
// key and the offending value.
class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key);
  std::string text(const std::string& key, const std::string& fallback);
  double number(const std::string& key, double fallback);
  int integer(const std::string& key, int fallback);
  std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::vector<int> int_list(const std::string& key, std::vector<int> fallback);
  std::vector<double> number_list(const std::string& key, std::vector<double> fallback);

  // Keys present in the input that no accessor ever touched.
  std::vector<std::string> unknown_keys() const;

 private:
  const std::string* fetch(const std::string& key);
  std::map<std::string, std::string> kv_;
  std::set<std::string> seen_;
};

}  // namespace btmpg
