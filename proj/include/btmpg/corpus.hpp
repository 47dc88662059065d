#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "btmpg/vocab.hpp"

namespace btmpg {

constexpr int kMaxSentenceTokens = 20;

// Lowercased tokens split on whitespace, punctuation emitted as single-char
// tokens. Deterministic; empty input gives an empty list.
std::vector<std::string> tokenize(const std::string& text);

std::string detokenize(const std::vector<std::string>& tokens);

// One aligned (source, target) sentence pair. Token lists are truncated to
// kMaxSentenceTokens content tokens; ids are assigned lazily by make_batches.
struct ParaphrasePair {
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  std::string raw_source;
  std::string raw_target;
};

struct CorpusLoad {
  std::vector<ParaphrasePair> pairs;
  std::size_t skipped_rows = 0;
};

// Question-pair file with question1/question2/is_duplicate columns (CSV or
// TSV, detected from the header). Only duplicate pairs are kept; malformed
// rows are counted and skipped. A missing file throws.
CorpusLoad load_quora(const std::string& path);

// Caption JSON ({"annotations": [{"image_id": ..., "caption": ...}]}).
// Captions of one image are paired consecutively and disjointly:
// (c1,c2), (c3,c4); images with fewer than two captions are skipped.
CorpusLoad load_mscoco(const std::string& path);

// Two aligned text files, one sentence per line.
CorpusLoad load_parallel(const std::string& source_path, const std::string& target_path);

ParaphrasePair make_paraphrase_pair(const std::string& source, const std::string& target);

// Deterministic shuffled split into train/valid/test index lists.
struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};
SplitIndices make_splits(std::size_t n, std::size_t valid_size, std::size_t test_size,
                         std::uint64_t seed);
void save_split_manifest(const std::string& path, const std::vector<std::size_t>& indices);

// Padded id matrices for one batch. Sources are framed as content + EOS,
// targets as BOS + content + EOS; positions past each length hold PAD and
// are flagged in the pad masks.
struct Batch {
  Eigen::MatrixXi source_matrix;  // [B × L_max]
  Eigen::MatrixXi target_matrix;  // [B × M_max]
  std::vector<int> source_lengths;
  std::vector<int> target_lengths;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> source_pad_mask;  // true at PAD
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> target_pad_mask;

  int size() const { return static_cast<int>(source_matrix.rows()); }
  std::vector<int> source_row(int b) const;  // unpadded, with EOS
  std::vector<int> target_row(int b) const;  // unpadded, BOS + content + EOS
};

std::vector<Batch> make_batches(const std::vector<ParaphrasePair>& pairs,
                                const Vocabulary& vocab, int batch_size,
                                int max_len = kMaxSentenceTokens, std::uint64_t seed = 0,
                                bool shuffle = true);

}  // namespace btmpg
