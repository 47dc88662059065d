#include "btmpg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "btmpg/corpus.hpp"

namespace btmpg {

namespace {

// n-gram keyed by its token span; map (not unordered) keeps everything
// deterministic without hashing token vectors.
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const TokenSeq& s, int n) {
  NgramCounts c;
  if (static_cast<int>(s.size()) < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++c[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return c;
}

struct PrecisionCounts {
  long long matched = 0;
  long long total = 0;
};

PrecisionCounts clipped_matches(const TokenSeq& hyp, const TokenSeq& ref, int n) {
  PrecisionCounts pc;
  const NgramCounts hc = count_ngrams(hyp, n);
  const NgramCounts rc = count_ngrams(ref, n);
  for (const auto& [gram, cnt] : hc) {
    pc.total += cnt;
    auto it = rc.find(gram);
    if (it != rc.end()) pc.matched += std::min(cnt, it->second);
  }
  return pc;
}

double brevity_penalty(long long hyp_len, long long ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": corpora differ in length (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
}

int edit_distance(const TokenSeq& a, const TokenSeq& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  std::vector<int> prev(m + 1), cur(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

TokenSeq apply_shift(const TokenSeq& h, int start, int len, int dest) {
  TokenSeq block(h.begin() + start, h.begin() + start + len);
  TokenSeq rest;
  rest.reserve(h.size());
  rest.insert(rest.end(), h.begin(), h.begin() + start);
  rest.insert(rest.end(), h.begin() + start + len, h.end());
  rest.insert(rest.begin() + dest, block.begin(), block.end());
  return rest;
}

}  // namespace

double corpus_bleu4(const Corpus& hypotheses, const Corpus& references) {
  require_aligned(hypotheses.size(), references.size(), "bleu");
  if (hypotheses.empty()) throw std::invalid_argument("bleu: empty corpus");

  PrecisionCounts pc[4];
  long long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<long long>(hypotheses[i].size());
    ref_len += static_cast<long long>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      const PrecisionCounts c = clipped_matches(hypotheses[i], references[i], n);
      pc[n - 1].matched += c.matched;
      pc[n - 1].total += c.total;
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (pc[n].matched == 0) return 0.0;
    log_sum += 0.25 * std::log(static_cast<double>(pc[n].matched) /
                               static_cast<double>(pc[n].total));
  }
  return 100.0 * brevity_penalty(hyp_len, ref_len) * std::exp(log_sum);
}

double sentence_bleu4(const TokenSeq& hypothesis, const TokenSeq& reference) {
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    PrecisionCounts c = clipped_matches(hypothesis, reference, n);
    if (n >= 2) {
      c.matched += 1;
      c.total += 1;
    }
    if (c.matched == 0 || c.total == 0) return 0.0;
    log_sum +=
        0.25 * std::log(static_cast<double>(c.matched) / static_cast<double>(c.total));
  }
  return 100.0 *
         brevity_penalty(static_cast<long long>(hypothesis.size()),
                         static_cast<long long>(reference.size())) *
         std::exp(log_sum);
}

double self_bleu(const Corpus& hypotheses, const Corpus& originals) {
  return corpus_bleu4(hypotheses, originals);
}

double ter(const TokenSeq& hypothesis, const TokenSeq& reference, TerOptions opt) {
  const double ref_len = reference.empty() ? 1.0 : static_cast<double>(reference.size());
  TokenSeq h = hypothesis;
  int shifts = 0;
  int dist = edit_distance(h, reference);
  if (opt.allow_shifts) {
    // Every ref span up to the shift cap, for the "moved block must exist
    // in the reference" rule.
    std::map<std::vector<std::string>, bool> ref_spans;
    for (int len = 1; len <= opt.max_shift_span; ++len)
      for (std::size_t i = 0; i + len <= reference.size(); ++i)
        ref_spans[std::vector<std::string>(reference.begin() + i,
                                           reference.begin() + i + len)] = true;
    while (true) {
      int best_gain = 0;
      TokenSeq best_h;
      const int hn = static_cast<int>(h.size());
      for (int len = 1; len <= std::min(opt.max_shift_span, hn); ++len) {
        for (int start = 0; start + len <= hn; ++start) {
          if (!ref_spans.count(
                  std::vector<std::string>(h.begin() + start, h.begin() + start + len)))
            continue;
          for (int dest = 0; dest <= hn - len; ++dest) {
            if (dest == start) continue;
            const TokenSeq moved = apply_shift(h, start, len, dest);
            const int gain = dist - edit_distance(moved, reference);
            if (gain > best_gain) {
              best_gain = gain;
              best_h = moved;
            }
          }
        }
      }
      if (best_gain <= 1) break;  // a shift costs one edit; demand net progress
      h = best_h;
      dist -= best_gain;
      ++shifts;
    }
  }
  return 100.0 * (static_cast<double>(shifts + dist)) / ref_len;
}

double self_ter(const Corpus& hypotheses, const Corpus& originals, TerOptions opt) {
  require_aligned(hypotheses.size(), originals.size(), "ter");
  if (hypotheses.empty()) throw std::invalid_argument("ter: empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    sum += ter(hypotheses[i], originals[i], opt);
  return sum / static_cast<double>(hypotheses.size());
}

double p_bleu(const std::vector<Corpus>& rounds) {
  const std::size_t k = rounds.size();
  if (k < 2) throw std::invalid_argument("p-bleu: needs at least two rounds");
  const std::size_t lines = rounds.front().size();
  for (const Corpus& c : rounds) require_aligned(c.size(), lines, "p-bleu");
  if (lines == 0) throw std::invalid_argument("p-bleu: empty corpus");

  double corpus_sum = 0.0;
  for (std::size_t ln = 0; ln < lines; ++ln) {
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) pair_sum += sentence_bleu4(rounds[i][ln], rounds[j][ln]);
    corpus_sum += pair_sum / static_cast<double>(k * (k - 1));
  }
  return corpus_sum / static_cast<double>(lines);
}

namespace {

double mean_scores_stream(std::istream& is, std::size_t expected_lines,
                          const std::string& what) {
  double sum = 0.0;
  std::size_t n = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (n == expected_lines)
      throw std::runtime_error(what + ": more scores than hypotheses (line " +
                               std::to_string(n + 1) + ")");
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error(what + ": malformed score at line " + std::to_string(n + 1));
    }
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos != line.size())
      throw std::runtime_error(what + ": malformed score at line " + std::to_string(n + 1));
    sum += v;
    ++n;
  }
  if (n != expected_lines)
    throw std::runtime_error(what + ": missing score at line " + std::to_string(n + 1) +
                             " (have " + std::to_string(n) + ", need " +
                             std::to_string(expected_lines) + ")");
  return sum / static_cast<double>(expected_lines);
}

}  // namespace

double mean_score_file(const std::string& path, std::size_t expected_lines) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("score file: cannot open " + path);
  return mean_scores_stream(is, expected_lines, "score file " + path);
}

double run_score_command(const std::string& command, const std::string& hyp_path,
                         const std::string& orig_path, std::size_t expected_lines) {
  const std::string full = command + " " + hyp_path + " " + orig_path;
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) throw std::runtime_error("scorer: cannot run " + full);
  std::string output;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
  const int rc = pclose(pipe);
  if (rc != 0)
    throw std::runtime_error("scorer: command failed with status " + std::to_string(rc));
  std::istringstream is(output);
  return mean_scores_stream(is, expected_lines, "scorer output");
}

std::string MetricsReport::to_json() const {
  // Keys emitted in sorted order with fixed formatting, so two runs over
  // the same data produce byte-identical reports.
  std::string out = "{";
  bool first = true;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (!v) return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    if (!first) out += ", ";
    out += "\"";
    out += key;
    out += "\": ";
    out += buf;
    first = false;
  };
  put("bleu4", bleu4);
  put("p_bleu", p_bleu);
  put("self_bleu", self_bleu);
  put("self_ter", self_ter);
  put("semantic_score", semantic_score);
  out += "}";
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

Corpus tokenize_lines(const std::vector<std::string>& lines) {
  Corpus c;
  c.reserve(lines.size());
  for (const std::string& l : lines) c.push_back(tokenize(l));
  return c;
}

}  // namespace btmpg
