#pragma once

#include <string>
#include <utility>
#include <vector>

#include "btmpg/autodiff.hpp"
#include "btmpg/rng.hpp"

namespace btmpg {

struct ParaphraserConfig {
  int d_e = 300;     // token embedding width
  int d_h = 512;     // recurrent hidden width
  int d_z = 128;     // latent code width
  int layers = 2;    // encoder/decoder stack depth
  int vocab_size = 0;

  void validate() const;  // throws std::invalid_argument on bad dims
};

// Per-position encodings plus the final-state summary for one sentence.
struct EncoderOutput {
  ad::Var o_s;     // [L × d_h]
  ad::Var h_s;     // [1 × d_h]
  int length = 0;
};

struct LatentPosterior {
  ad::Var mu;          // [1 × d_z]
  ad::Var log_sigma2;  // [1 × d_z], clamped to [-10, 10]
  ad::Var sigma2;      // exp(log_sigma2), positive elementwise
};

struct DecoderStepOutput {
  ad::Var p_d;  // [1 × V] generation distribution
  ad::Var p_a;  // [1 × L] attention over source positions
  ad::Var eta;  // [1 × 1] generation gate
  ad::Var p;    // [1 × V] mixed output distribution
  ad::Var v_a;  // [1 × d_h] attention context
};

// Hidden/cell pairs for a stacked LSTM, one entry per layer.
struct LstmState {
  std::vector<ad::Var> h;
  std::vector<ad::Var> c;
};

// What the copy mechanism scatters from: hard token ids, or soft rows when
// the source is itself a generated relaxed sequence.
struct SourceRef {
  std::vector<int> ids;  // content + EOS framing
  ad::Var soft_rows;     // [L × V]
  bool soft = false;

  static SourceRef hard(std::vector<int> token_ids) {
    SourceRef s;
    s.ids = std::move(token_ids);
    return s;
  }
  static SourceRef from_soft(ad::Var rows) {
    SourceRef s;
    s.soft_rows = rows;
    s.soft = true;
    return s;
  }
};

// Recurrent conditional-VAE paraphrase model: a shared two-use encoder
// stack (source sentence; target sentence conditioned on the source
// summary), Gaussian posterior heads, and an attention + copy decoder
// whose every input is the token embedding concatenated with the latent
// code. One instance owns its parameters; forward passes build nodes on a
// caller-provided tape and are safe to run concurrently with frozen
// parameters.
class Paraphraser {
 public:
  Paraphraser(const ParaphraserConfig& cfg, std::uint64_t init_seed);

  const ParaphraserConfig& config() const { return cfg_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  ad::Var embedding_var(ad::Tape& t) const;                       // [V × d_e]
  ad::Var embed_hard(ad::Tape& t, const std::vector<int>& ids) const;
  ad::Var embed_soft(ad::Tape& t, ad::Var soft_rows) const;       // rows · W_e

  // Source framing is content + EOS. Soft inputs must have rows on the
  // simplex; an exact one-hot soft input matches the hard path to 1e-6.
  EncoderOutput encode_source(ad::Tape& t, const std::vector<int>& ids) const;
  EncoderOutput encode_source_soft(ad::Tape& t, ad::Var soft_rows) const;
  EncoderOutput encode_source_ref(ad::Tape& t, const SourceRef& src) const;

  // Target ids use content + EOS framing (no BOS). The target encoder
  // reuses the source encoder weights and starts from h_s.
  LatentPosterior encode_posterior(ad::Tape& t, const std::vector<int>& target_ids,
                                   const EncoderOutput& enc) const;

  // z = mu + sqrt(sigma2) ⊙ eps with eps treated as a constant.
  ad::Var sample_latent(ad::Tape& t, const LatentPosterior& post,
                        const Eigen::RowVectorXd& eps) const;

  LstmState initial_decoder_state(ad::Tape& t, const EncoderOutput& enc) const;

  // p_a = softmax(o_d · O_sᵀ), v_a = p_a · O_s.
  std::pair<ad::Var, ad::Var> attend(ad::Tape& t, ad::Var o_d, ad::Var o_s) const;

  std::pair<DecoderStepOutput, LstmState> decode_step(ad::Tape& t, ad::Var e_d,
                                                      ad::Var z, const LstmState& state,
                                                      const EncoderOutput& enc,
                                                      const SourceRef& src) const;

  // framed_target = BOS + content + EOS; returns one DecoderStepOutput per
  // predicted position (len(framed_target) - 1 of them).
  std::vector<DecoderStepOutput> decode_teacher_forced(ad::Tape& t,
                                                       const std::vector<int>& framed_target,
                                                       ad::Var z, const EncoderOutput& enc,
                                                       const SourceRef& src) const;

 private:
  ParaphraserConfig cfg_;
  ad::ParamSet params_;

  struct LayerRefs {
    ad::Param* wx;
    ad::Param* wh;
    ad::Param* b;
  };
  std::vector<LayerRefs> enc_layers_;
  std::vector<LayerRefs> dec_layers_;
  struct InitRefs {
    ad::Param* w;
    ad::Param* b;
  };
  std::vector<InitRefs> dec_init_;
  ad::Param* embed_;
  ad::Param* mu_w_;
  ad::Param* mu_b_;
  ad::Param* ls_w_;
  ad::Param* ls_b_;
  ad::Param* out_w_;
  ad::Param* out_b_;
  ad::Param* gate_wh_;
  ad::Param* gate_ws_;
  ad::Param* gate_b_;

  EncoderOutput run_encoder(ad::Tape& t, ad::Var embedded, const LstmState& init) const;
  LstmState zero_state(ad::Tape& t) const;
};

// Diagonal-Gaussian-to-standard-normal divergence, closed form:
// -1/2 Σ (1 + log σ² − μ² − σ²). Nonnegative; zero iff μ=0, σ²=1.
ad::Var kl_loss(ad::Tape& t, const LatentPosterior& post);

// 1 + ln(batch_size / first_word_count): how much the first predicted
// token's loss is boosted when its word is rare as a sentence opener
// within the batch. Always >= 1.
double first_word_coefficient(int batch_size, int first_word_count);

// Negative evidence lower bound for one sentence: mean token
// cross-entropy (first token weighted by first_word_coeff; replacement
// scaling by default, additive when first_word_additive) plus
// kl_weight · KL.
struct ParaphraseLoss {
  ad::Var total;
  ad::Var ce;  // cross-entropy part, per-token mean
  ad::Var kl;
};
ParaphraseLoss paraphrase_loss(ad::Tape& t, const std::vector<DecoderStepOutput>& steps,
                               const std::vector<int>& framed_target,
                               const LatentPosterior& post, double first_word_coeff,
                               bool first_word_additive = false, double kl_weight = 1.0);

}  // namespace btmpg
