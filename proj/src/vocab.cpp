#include "btmpg/vocab.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace btmpg {

namespace {
const std::string kSpecialSurfaces[Vocabulary::kNumSpecials] = {"<pad>", "<unk>", "<bos>",
                                                                "<eos>"};
}

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecialSurfaces) push(s);
}

void Vocabulary::push(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences,
                             std::size_t max_size) {
  if (max_size < kNumSpecials) throw std::invalid_argument("vocab: max_size must be >= 4");
  struct Entry {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::size_t tick = 0;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) {
      auto [it, inserted] = freq.try_emplace(tok);
      if (inserted) it->second.first_seen = tick;
      ++it->second.count;
      ++tick;
    }

  std::vector<std::pair<std::string, Entry>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocabulary v;
  for (const auto& [tok, e] : ranked) {
    if (v.tokens_.size() >= max_size) break;
    if (v.token_to_id_.count(tok)) continue;  // reserved surface in corpus text
    v.push(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab: id out of range");
  return tokens_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("vocab: cannot read " + path);
  Vocabulary v;
  std::string line;
  int at = 0;
  while (std::getline(is, line)) {
    if (at < kNumSpecials) {
      if (line != kSpecialSurfaces[at])
        throw std::runtime_error("vocab: file does not start with the reserved tokens");
    } else {
      v.push(line);
    }
    ++at;
  }
  if (at < kNumSpecials) throw std::runtime_error("vocab: truncated file " + path);
  return v;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a_hex(ss.str());
}

}  // namespace btmpg
