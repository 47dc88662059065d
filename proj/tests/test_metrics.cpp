#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "btmpg/metrics.hpp"
#include "btmpg/rng.hpp"

using namespace btmpg;

namespace {

TokenSeq toks(const std::string& spaced) {
  TokenSeq out;
  std::string cur;
  for (char ch : spaced) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Plain-recursion edit distance with memoization, structured nothing like
// the production two-row table, for cross-checking small cases.
int ed_oracle(const TokenSeq& a, const TokenSeq& b, std::size_t i, std::size_t j,
              std::map<std::pair<std::size_t, std::size_t>, int>& memo) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  const auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int best = ed_oracle(a, b, i + 1, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, ed_oracle(a, b, i + 1, j, memo) + 1);
  best = std::min(best, ed_oracle(a, b, i, j + 1, memo) + 1);
  memo[key] = best;
  return best;
}

int ed_oracle(const TokenSeq& a, const TokenSeq& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  return ed_oracle(a, b, 0, 0, memo);
}

std::vector<TokenSeq> all_sequences_up_to(int max_len) {
  const std::vector<std::string> alphabet = {"a", "b", "c"};
  std::vector<TokenSeq> out = {{}};
  std::vector<TokenSeq> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const TokenSeq& s : frontier)
      for (const std::string& t : alphabet) {
        TokenSeq e = s;
        e.push_back(t);
        next.push_back(e);
        out.push_back(std::move(e));
      }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("corpus bleu on identical corpora is exactly 100") {
  Corpus c = {toks("what is the best way"), toks("how do people learn"), toks("a b")};
  CHECK(corpus_bleu4(c, c) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("corpus bleu with no unigram overlap is zero") {
  Corpus h = {toks("a b c d e")};
  Corpus r = {toks("v w x y z")};
  CHECK(corpus_bleu4(h, r) == 0.0);
}

TEST_CASE("corpus bleu hand case: one substituted token in six") {
  Corpus h = {toks("a b c d e f")};
  Corpus r = {toks("a b c d e g")};
  // precisions 5/6, 4/5, 3/4, 2/3; no brevity penalty
  const double expect = 100.0 * std::pow((5.0 / 6) * (4.0 / 5) * (3.0 / 4) * (2.0 / 3), 0.25);
  CHECK(corpus_bleu4(h, r) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("corpus bleu hand case: brevity penalty for a short hypothesis") {
  Corpus h = {toks("a b c d e")};
  Corpus r = {toks("a b c d e f")};
  const double expect = 100.0 * std::exp(1.0 - 6.0 / 5.0);
  CHECK(corpus_bleu4(h, r) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("corpus bleu clips repeated n-grams") {
  Corpus h = {toks("the the the the the")};
  Corpus r = {toks("the cat sat on it")};
  // unigram matches clip at 1, and no bigram matches at all -> 0
  CHECK(corpus_bleu4(h, r) == 0.0);
}

TEST_CASE("corpus bleu matches the frozen reference-scorer values") {
  const std::string dir = BTMPG_TEST_DATA_DIR;
  Corpus hyp = tokenize_lines(read_lines(dir + "/bleu_hyp.txt"));
  Corpus ref = tokenize_lines(read_lines(dir + "/bleu_ref.txt"));
  REQUIRE(hyp.size() == 100);
  REQUIRE(ref.size() == 100);
  CHECK(std::abs(corpus_bleu4(hyp, ref) - 58.494340) < 0.01);
  CHECK(std::abs(corpus_bleu4(ref, hyp) - 58.278659) < 0.01);
}

TEST_CASE("corpus bleu rejects misaligned corpora") {
  Corpus h = {toks("a b"), toks("c d")};
  Corpus r = {toks("a b")};
  CHECK_THROWS(corpus_bleu4(h, r));
}

TEST_CASE("sentence bleu: identity, disjoint, and a smoothed hand case") {
  CHECK(sentence_bleu4(toks("a b c d e"), toks("a b c d e")) ==
        doctest::Approx(100.0).epsilon(1e-12));
  CHECK(sentence_bleu4(toks("a b c"), toks("x y z")) == 0.0);
  // two tokens match, nothing longer: p1 = 1/3 raw, higher orders smoothed
  const TokenSeq h = toks("the the the");
  const TokenSeq r = toks("the cat");
  const double expect =
      100.0 * std::pow((1.0 / 3) * (1.0 / 3) * (1.0 / 2) * 1.0, 0.25);
  CHECK(sentence_bleu4(h, r) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("self bleu is corpus bleu against the originals") {
  Corpus out = {toks("what is the way"), toks("b a")};
  Corpus orig = {toks("what is the best way"), toks("a b")};
  CHECK(self_bleu(out, orig) == corpus_bleu4(out, orig));
}

TEST_CASE("ter basics: identity, substitution, edit mix") {
  CHECK(ter(toks("a b c d e"), toks("a b c d e")) == 0.0);
  CHECK(ter(toks("a b x d e"), toks("a b c d e")) == doctest::Approx(20.0));
  // one deletion + one substitution against a 4-token reference
  CHECK(ter(toks("a x c"), toks("a b c d")) == doctest::Approx(50.0));
}

TEST_CASE("ter counts a block swap as one shift") {
  // moving one block realigns everything: 1 shift instead of 4 edits
  CHECK(ter(toks("a b c d"), toks("c d a b")) == doctest::Approx(25.0));
  TerOptions no_shift;
  no_shift.allow_shifts = false;
  CHECK(ter(toks("a b c d"), toks("c d a b"), no_shift) == doctest::Approx(100.0));
}

TEST_CASE("ter empty-reference convention: 100 per hypothesis token") {
  CHECK(ter(toks("a b c"), {}) == doctest::Approx(300.0));
  CHECK(ter({}, {}) == 0.0);
}

TEST_CASE("no-shift ter equals a memoized-recursion oracle on all short pairs") {
  TerOptions no_shift;
  no_shift.allow_shifts = false;
  const auto seqs = all_sequences_up_to(4);
  for (const TokenSeq& a : seqs)
    for (const TokenSeq& b : seqs) {
      const double ref_len = b.empty() ? 1.0 : double(b.size());
      const double expect = 100.0 * ed_oracle(a, b) / ref_len;
      REQUIRE(ter(a, b, no_shift) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("ter is zero exactly on equal sequences, shifts never hurt") {
  const auto seqs = all_sequences_up_to(3);
  TerOptions no_shift;
  no_shift.allow_shifts = false;
  for (const TokenSeq& a : seqs)
    for (const TokenSeq& b : seqs) {
      const double with_shifts = ter(a, b);
      REQUIRE((with_shifts == 0.0) == (a == b));
      REQUIRE(with_shifts <= ter(a, b, no_shift) + 1e-12);
    }
}

TEST_CASE("self ter averages over lines") {
  Corpus h = {toks("a b c d e"), toks("a b x d e")};
  Corpus o = {toks("a b c d e"), toks("a b c d e")};
  CHECK(self_ter(h, o) == doctest::Approx(10.0));
  CHECK_THROWS(self_ter(h, {toks("a")}));
}

TEST_CASE("p-bleu of identical rounds is exactly 100") {
  Corpus c = {toks("what is this"), toks("a b c d")};
  CHECK(p_bleu({c, c, c}) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("p-bleu equals the enumerated ordered-pair average for k=3") {
  std::vector<Corpus> rounds = {
      {toks("the cat sat on the mat"), toks("how do i learn a language")},
      {toks("the cat sat on a mat"), toks("how would i learn a language")},
      {toks("a cat was sitting on the mat"), toks("what is the way to learn it")},
  };
  double corpus_sum = 0.0;
  for (int ln = 0; ln < 2; ++ln) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) s += sentence_bleu4(rounds[i][ln], rounds[j][ln]);
    corpus_sum += s / 6.0;
  }
  CHECK(p_bleu(rounds) == doctest::Approx(corpus_sum / 2.0).epsilon(1e-12));
}

TEST_CASE("p-bleu drops when one round is vocabulary-disjoint") {
  Corpus c = {toks("what is this thing"), toks("a b c d")};
  Corpus other = {toks("v w x y"), toks("p q r s")};
  CHECK(p_bleu({c, c, other}) < p_bleu({c, c, c}));
}

TEST_CASE("p-bleu input validation") {
  Corpus c = {toks("a b")};
  CHECK_THROWS(p_bleu({c}));
  CHECK_THROWS(p_bleu({c, Corpus{}}));
}

TEST_CASE("score files: mean, missing line, malformed line, extra line") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "btmpg_scores.txt").string();
  {
    std::ofstream os(path);
    os << "0.5\n0.75\n1.0\n";
  }
  CHECK(mean_score_file(path, 3) == doctest::Approx(0.75));

  CHECK_THROWS_WITH_AS(mean_score_file(path, 4), doctest::Contains("line 4"),
                       std::runtime_error);
  {
    std::ofstream os(path);
    os << "0.5\nnot-a-number\n1.0\n";
  }
  CHECK_THROWS_WITH_AS(mean_score_file(path, 3), doctest::Contains("line 2"),
                       std::runtime_error);
  {
    std::ofstream os(path);
    os << "0.5\n0.75\n1.0\n0.25\n";
  }
  CHECK_THROWS(mean_score_file(path, 3));
  fs::remove(path);
}

TEST_CASE("score command: mean of per-line stdout, failure propagates") {
  namespace fs = std::filesystem;
  const std::string script = (fs::temp_directory_path() / "btmpg_scorer.sh").string();
  {
    std::ofstream os(script);
    os << "#!/bin/sh\nprintf '0.25\\n0.75\\n'\n";
  }
  const std::string hyp = (fs::temp_directory_path() / "btmpg_h.txt").string();
  const std::string orig = (fs::temp_directory_path() / "btmpg_o.txt").string();
  {
    std::ofstream(hyp) << "x\ny\n";
    std::ofstream(orig) << "x\ny\n";
  }
  CHECK(run_score_command("sh " + script, hyp, orig, 2) == doctest::Approx(0.5));
  CHECK_THROWS(run_score_command("sh " + script, hyp, orig, 3));
  CHECK_THROWS(run_score_command("false", hyp, orig, 2));
  fs::remove(script);
  fs::remove(hyp);
  fs::remove(orig);
}

TEST_CASE("metrics report renders sorted keys at two decimals") {
  MetricsReport r;
  r.bleu4 = 12.345;
  r.self_bleu = 7.0;
  r.self_ter = 66.666;
  r.p_bleu = 99.999;
  r.semantic_score = 0.875;
  CHECK(r.to_json() ==
        "{\"bleu4\": 12.35, \"p_bleu\": 100.00, \"self_bleu\": 7.00, "
        "\"self_ter\": 66.67, \"semantic_score\": 0.88}");

  MetricsReport partial;
  partial.self_bleu = 50.0;
  partial.self_ter = 25.0;
  CHECK(partial.to_json() == "{\"self_bleu\": 50.00, \"self_ter\": 25.00}");
  CHECK(MetricsReport{}.to_json() == "{}");
}

TEST_CASE("line reading and tokenization helpers") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "btmpg_lines.txt").string();
  {
    std::ofstream os(path);
    os << "What is THIS?\n\nsecond line\n";
  }
  auto lines = read_lines(path);
  REQUIRE(lines.size() == 3);
  auto corpus = tokenize_lines(lines);
  CHECK(corpus[0] == toks("what is this ?"));
  CHECK(corpus[1].empty());
  CHECK(corpus[2] == toks("second line"));
  CHECK_THROWS(read_lines(path + ".missing"));
  fs::remove(path);
}
