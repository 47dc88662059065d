#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btmpg/autodiff.hpp"
#include "btmpg/cvae.hpp"
#include "btmpg/gumbel.hpp"

namespace btmpg {

struct BTConfig {
  int layers = 3;      // encoder depth and decoder depth
  int model_dim = 450;
  int heads = 9;
  int ff_dim = 0;      // 0 means 4 × model_dim
  int vocab_size = 0;

  int ff() const { return ff_dim > 0 ? ff_dim : 4 * model_dim; }
  void validate() const;  // model_dim must divide evenly across heads
};

// Transformer encoder-decoder with a copy gate, mapping a paraphrase
// (hard tokens or a relaxed SoftSequence) back onto the sentence it came
// from. Teacher-forced only: this model guides training and is never used
// to generate. Pre-norm residual layers, sinusoidal positions, causal
// self-attention in the decoder; the copy distribution is the final
// decoder layer's cross-attention averaged over heads.
class BackTranslator {
 public:
  BackTranslator(const BTConfig& cfg, std::uint64_t init_seed);

  const BTConfig& config() const { return cfg_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  // input: the sentence to translate back (content + EOS framing), hard or
  // soft. framed_target: BOS + original + EOS. Returns the mixed
  // generation/copy distributions, one row per predicted position
  // [(len(framed_target) - 1) × V].
  ad::Var forward(ad::Tape& t, const SourceRef& input,
                  const std::vector<int>& framed_target) const;

 private:
  BTConfig cfg_;
  ad::ParamSet params_;

  struct Mha {
    ad::Param *wq, *wk, *wv, *wo;
  };
  struct Ff {
    ad::Param *w1, *b1, *w2, *b2;
  };
  struct Norm {
    ad::Param *gain, *bias;
  };
  struct EncLayer {
    Mha self;
    Ff ff;
    Norm n1, n2;
  };
  struct DecLayer {
    Mha self, cross;
    Ff ff;
    Norm n1, n2, n3;
  };
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Norm enc_final_, dec_final_;
  ad::Param* embed_;
  ad::Param* out_w_;
  ad::Param* out_b_;
  ad::Param* gate_w_;
  ad::Param* gate_b_;

  ad::Var embed_scaled(ad::Tape& t, const SourceRef& src, int* len) const;
  ad::Var embed_scaled_ids(ad::Tape& t, const std::vector<int>& ids) const;
  // attn_avg, when non-null, receives the head-averaged attention weights.
  ad::Var attention(ad::Tape& t, const Mha& m, ad::Var q_in, ad::Var kv_in,
                    const ad::Mat* mask, ad::Var* attn_avg) const;
  ad::Var feed_forward(ad::Tape& t, const Ff& f, ad::Var x) const;
  ad::Var norm(ad::Tape& t, const Norm& n, ad::Var x) const;
};

// Mean -log p of each framed-target token under the matching row of
// step_rows (one row per predicted position).
ad::Var sequence_ce(ad::Tape& t, ad::Var step_rows, const std::vector<int>& framed_target);

// L_p anchors the back-translator on the ground-truth paraphrase; each
// round's relaxed output adds lambda-weighted L_s through which the
// paraphraser itself receives gradient. total = l_p + lambda * sum(l_s).
struct BtLossParts {
  ad::Var total;
  ad::Var l_p;
  std::vector<ad::Var> l_s;
};
BtLossParts bt_loss(ad::Tape& t, const BackTranslator& model,
                    const std::vector<SoftSequence>& round_outputs,
                    const std::vector<int>& paraphrase_ids,
                    const std::vector<int>& framed_source, double lambda);

}  // namespace btmpg
