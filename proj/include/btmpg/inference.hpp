#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btmpg/cvae.hpp"
#include "btmpg/vocab.hpp"

namespace btmpg {

// One generation round for one sentence. token_ids are the raw decoder
// emissions (EOS stripped); tokens/text are the surface form after UNK
// repair, which is what the next round consumes.
struct RoundResult {
  int round = 0;  // 1-based
  std::vector<int> token_ids;
  std::vector<std::string> tokens;
  std::string text;
  ad::Mat copy_attention;  // one attention row per emitted token
};

struct DecodeResult {
  std::vector<int> token_ids;
  ad::Mat copy_attention;
};

struct GenerateOptions {
  int max_len = 21;   // 20 tokens + the EOS slot
  bool sample = false;  // draw from the mixed distribution instead of argmax
};

// Token-at-a-time decode against frozen weights: each step embeds the
// previous token, takes the argmax of the mixed generation/copy
// distribution (or samples it when opt.sample), and stops at EOS or after
// max_len emissions. EOS contributes no output row.
DecodeResult greedy_decode(ad::Tape& t, const Paraphraser& model, ad::Var z,
                           const EncoderOutput& enc, const SourceRef& src,
                           const GenerateOptions& opt = {}, Rng* sampler = nullptr);

// UNK repair: each UNK output becomes the source surface token holding the
// most copy attention at that step. When that token is itself the UNK
// surface form, the most-attended position with any other surface is used
// instead; with no source content tokens at all the UNK surface stays.
std::vector<std::string> replace_unk(const std::vector<int>& token_ids,
                                     const ad::Mat& copy_attention,
                                     const std::vector<std::string>& source_tokens,
                                     const Vocabulary& vocab);

// R chained rounds from one sentence. Every round re-tokenizes the previous
// round's repaired text, encodes it as a hard sentence, draws a fresh
// latent from the standard normal prior, and decodes. Deterministic given
// the rng state.
std::vector<RoundResult> generate_rounds(const Paraphraser& model, const Vocabulary& vocab,
                                         const std::string& sentence, int rounds, Rng& rng,
                                         const GenerateOptions& opt = {});

// File-level driver: writes round_<i>.txt for i = 1..rounds (one line per
// input line, aligned) plus manifest.json naming the checkpoint hash, seed
// and round count. Each input line gets its own seed derived from `seed`,
// so results do not depend on how many lines precede them.
void generate_to_directory(const Paraphraser& model, const Vocabulary& vocab,
                           const std::vector<std::string>& input_lines, int rounds,
                           std::uint64_t seed, const std::string& out_dir,
                           const std::string& checkpoint_hash,
                           const GenerateOptions& opt = {});

}  // namespace btmpg
