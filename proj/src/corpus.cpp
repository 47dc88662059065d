#include "btmpg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "btmpg/rng.hpp"

namespace btmpg {

namespace {

bool is_word_byte(unsigned char c) {
  // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and stay inside words.
  return std::isalnum(c) || c >= 0x80;
}

std::vector<std::string> truncate_tokens(std::vector<std::string> toks, std::size_t n) {
  if (toks.size() > n) toks.resize(n);
  return toks;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

ParaphrasePair make_paraphrase_pair(const std::string& source, const std::string& target) {
  ParaphrasePair p;
  p.raw_source = source;
  p.raw_target = target;
  p.source_tokens = truncate_tokens(tokenize(source), kMaxSentenceTokens);
  p.target_tokens = truncate_tokens(tokenize(target), kMaxSentenceTokens);
  return p;
}

namespace {

// Minimal CSV row reader: handles quoted fields, doubled quotes and embedded
// newlines inside quotes. Returns false at end of stream.
bool read_csv_row(std::istream& is, char delim, std::vector<std::string>* fields) {
  fields->clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int ch;
  while ((ch = is.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          field.push_back('"');
          is.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == delim) {
      fields->push_back(field);
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields->push_back(field);
  return true;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string h = header[i];
    std::transform(h.begin(), h.end(), h.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (h == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

CorpusLoad load_quora(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("quora: cannot open " + path);

  std::string header_line;
  if (!std::getline(is, header_line)) throw std::runtime_error("quora: empty file " + path);
  const char delim = header_line.find('\t') != std::string::npos ? '\t' : ',';
  std::istringstream header_stream(header_line + "\n");
  std::vector<std::string> header;
  read_csv_row(header_stream, delim, &header);
  const int c_q1 = find_column(header, "question1");
  const int c_q2 = find_column(header, "question2");
  const int c_dup = find_column(header, "is_duplicate");
  if (c_q1 < 0 || c_q2 < 0 || c_dup < 0)
    throw std::runtime_error("quora: header must name question1, question2, is_duplicate");

  CorpusLoad out;
  std::vector<std::string> row;
  const int need = std::max({c_q1, c_q2, c_dup}) + 1;
  while (read_csv_row(is, delim, &row)) {
    if (static_cast<int>(row.size()) < need) {
      ++out.skipped_rows;
      continue;
    }
    const std::string& flag = row[c_dup];
    if (flag != "0" && flag != "1") {
      ++out.skipped_rows;
      continue;
    }
    if (flag == "0") continue;
    ParaphrasePair p = make_paraphrase_pair(row[c_q1], row[c_q2]);
    if (p.source_tokens.empty() || p.target_tokens.empty()) {
      ++out.skipped_rows;
      continue;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

CorpusLoad load_mscoco(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("mscoco: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("mscoco: bad JSON in " + path + ": " + e.what());
  }
  if (!j.contains("annotations") || !j["annotations"].is_array())
    throw std::runtime_error("mscoco: missing annotations array in " + path);

  // Group captions per image in encounter order.
  std::vector<std::int64_t> image_order;
  std::map<std::int64_t, std::vector<std::string>> captions;
  CorpusLoad out;
  for (const auto& ann : j["annotations"]) {
    if (!ann.contains("image_id") || !ann.contains("caption") ||
        !ann["caption"].is_string()) {
      ++out.skipped_rows;
      continue;
    }
    const std::int64_t img = ann["image_id"].get<std::int64_t>();
    auto it = captions.find(img);
    if (it == captions.end()) {
      image_order.push_back(img);
      it = captions.emplace(img, std::vector<std::string>{}).first;
    }
    it->second.push_back(ann["caption"].get<std::string>());
  }

  for (std::int64_t img : image_order) {
    const auto& caps = captions[img];
    if (caps.size() < 2) continue;
    for (std::size_t i = 0; i + 1 < caps.size(); i += 2) {
      ParaphrasePair p = make_paraphrase_pair(caps[i], caps[i + 1]);
      if (p.source_tokens.empty() || p.target_tokens.empty()) {
        ++out.skipped_rows;
        continue;
      }
      out.pairs.push_back(std::move(p));
    }
  }
  return out;
}

CorpusLoad load_parallel(const std::string& source_path, const std::string& target_path) {
  std::ifstream src(source_path, std::ios::binary), tgt(target_path, std::ios::binary);
  if (!src) throw std::runtime_error("parallel: cannot open " + source_path);
  if (!tgt) throw std::runtime_error("parallel: cannot open " + target_path);
  CorpusLoad out;
  std::string a, b;
  std::size_t line = 0;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(src, a));
    const bool gb = static_cast<bool>(std::getline(tgt, b));
    if (!ga && !gb) break;
    if (ga != gb)
      throw std::runtime_error("parallel: line counts differ after line " +
                               std::to_string(line));
    ++line;
    ParaphrasePair p = make_paraphrase_pair(a, b);
    if (p.source_tokens.empty() || p.target_tokens.empty()) {
      ++out.skipped_rows;
      continue;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

SplitIndices make_splits(std::size_t n, std::size_t valid_size, std::size_t test_size,
                         std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  if (valid_size + test_size > n)
    throw std::invalid_argument("split: valid+test exceed corpus size");
  SplitIndices s;
  s.valid.assign(idx.begin(), idx.begin() + valid_size);
  s.test.assign(idx.begin() + valid_size, idx.begin() + valid_size + test_size);
  s.train.assign(idx.begin() + valid_size + test_size, idx.end());
  return s;
}

void save_split_manifest(const std::string& path, const std::vector<std::size_t>& indices) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("split: cannot write " + path);
  for (std::size_t i : indices) os << i << '\n';
}

std::vector<int> Batch::source_row(int b) const {
  std::vector<int> out(source_lengths[b]);
  for (int t = 0; t < source_lengths[b]; ++t) out[t] = source_matrix(b, t);
  return out;
}

std::vector<int> Batch::target_row(int b) const {
  std::vector<int> out(target_lengths[b]);
  for (int t = 0; t < target_lengths[b]; ++t) out[t] = target_matrix(b, t);
  return out;
}

std::vector<Batch> make_batches(const std::vector<ParaphrasePair>& pairs,
                                const Vocabulary& vocab, int batch_size, int max_len,
                                std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
  }

  std::vector<Batch> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const int b_n = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - at));
    std::vector<std::vector<int>> src(b_n), tgt(b_n);
    int l_max = 0, m_max = 0;
    for (int b = 0; b < b_n; ++b) {
      const ParaphrasePair& p = pairs[order[at + b]];
      std::vector<int> s = vocab.encode(truncate_tokens(p.source_tokens, max_len));
      std::vector<int> m = vocab.encode(truncate_tokens(p.target_tokens, max_len));
      s.push_back(Vocabulary::kEos);
      m.insert(m.begin(), Vocabulary::kBos);
      m.push_back(Vocabulary::kEos);
      l_max = std::max<int>(l_max, s.size());
      m_max = std::max<int>(m_max, m.size());
      src[b] = std::move(s);
      tgt[b] = std::move(m);
    }
    Batch batch;
    batch.source_matrix = Eigen::MatrixXi::Constant(b_n, l_max, Vocabulary::kPad);
    batch.target_matrix = Eigen::MatrixXi::Constant(b_n, m_max, Vocabulary::kPad);
    batch.source_pad_mask.setConstant(b_n, l_max, true);
    batch.target_pad_mask.setConstant(b_n, m_max, true);
    for (int b = 0; b < b_n; ++b) {
      batch.source_lengths.push_back(static_cast<int>(src[b].size()));
      batch.target_lengths.push_back(static_cast<int>(tgt[b].size()));
      for (std::size_t t = 0; t < src[b].size(); ++t) {
        batch.source_matrix(b, t) = src[b][t];
        batch.source_pad_mask(b, t) = false;
      }
      for (std::size_t t = 0; t < tgt[b].size(); ++t) {
        batch.target_matrix(b, t) = tgt[b][t];
        batch.target_pad_mask(b, t) = false;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace btmpg
