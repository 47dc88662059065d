#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace btmpg {

// Token/id bijection with four reserved ids. Immutable once built; shareable
// across threads.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  // Most-frequent tokens kept up to max_size total entries (specials
  // included); ties broken by first occurrence. max_size must be >= 4.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          std::size_t max_size);

  int id(const std::string& token) const;            // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // One token per line, in id order.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_to_id_;
  void push(const std::string& token);
};

// FNV-1a 64-bit, hex-encoded. Used to fingerprint vocabulary files so a
// checkpoint can refuse a mismatched vocabulary.
std::string fnv1a_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

}  // namespace btmpg
