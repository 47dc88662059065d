#pragma once

#include <optional>
#include <string>
#include <vector>

namespace btmpg {

using TokenSeq = std::vector<std::string>;
using Corpus = std::vector<TokenSeq>;

// Corpus-level BLEU with n-gram orders 1..4: geometric mean of modified
// (clipped) n-gram precisions times the brevity penalty, scaled to
// [0, 100]. No smoothing; an order with zero matches anywhere in the
// corpus zeroes the score, and an order no hypothesis is long enough to
// produce counts as zero matches.
double corpus_bleu4(const Corpus& hypotheses, const Corpus& references);

// Single-sentence BLEU4 used inside diversity scoring. Orders >= 2 get
// add-one smoothing on both match and total counts so short sentences
// are comparable; unigrams are left unsmoothed so disjoint sentences
// still score 0.
double sentence_bleu4(const TokenSeq& hypothesis, const TokenSeq& reference);

// BLEU4 of the outputs against the sentences they paraphrase. Lower means
// the outputs moved further from their originals.
double self_bleu(const Corpus& hypotheses, const Corpus& originals);

struct TerOptions {
  bool allow_shifts = true;  // false = plain edit distance, for cross-checks
  int max_shift_span = 10;
};

// Translation edit rate, in percent: block shifts (greedy search, one
// point each) plus insertions/deletions/substitutions, divided by the
// reference length. An empty reference counts its length as 1, so the
// score is 100 per leftover hypothesis token.
double ter(const TokenSeq& hypothesis, const TokenSeq& reference, TerOptions opt = {});

// Corpus mean of ter(output, original).
double self_ter(const Corpus& hypotheses, const Corpus& originals, TerOptions opt = {});

// Diversity across k >= 2 generation rounds: for each input line, the mean
// sentence BLEU over all ordered pairs of that line's round outputs, then
// averaged over lines. 100 = every round said the same thing.
double p_bleu(const std::vector<Corpus>& rounds);

// Mean of externally produced per-line scores. Reads one real per line;
// throws naming the first malformed or missing line. The count must match
// the hypothesis corpus exactly.
double mean_score_file(const std::string& path, std::size_t expected_lines);

// Runs `command <hyp_file> <orig_file>`, expecting one score per line on
// stdout; returns their mean.
double run_score_command(const std::string& command, const std::string& hyp_path,
                         const std::string& orig_path, std::size_t expected_lines);

struct MetricsReport {
  std::optional<double> bleu4;
  std::optional<double> self_bleu;
  std::optional<double> self_ter;
  std::optional<double> p_bleu;
  std::optional<double> semantic_score;

  // Sorted keys, absent fields omitted, every value fixed to 2 decimals.
  std::string to_json() const;
};

// File helpers shared by the evaluation paths: whole-line reads and the
// same tokenization the training corpus uses.
std::vector<std::string> read_lines(const std::string& path);
Corpus tokenize_lines(const std::vector<std::string>& lines);

}  // namespace btmpg
