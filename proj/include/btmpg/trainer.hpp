#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "btmpg/backtranslator.hpp"
#include "btmpg/corpus.hpp"
#include "btmpg/cvae.hpp"
#include "btmpg/gumbel.hpp"
#include "btmpg/vocab.hpp"

namespace btmpg {

struct TrainConfig {
  double lambda = 1.0;         // round-loss weight in the combined objective
  int epochs = 30;
  int batch_size = 50;
  double tau_max = 5.0;
  bool tau_increasing = false;  // defaults to annealing tau downward
  int rounds_trained = 2;
  std::vector<int> bt_rounds = {1, 2};  // which generated rounds feed the BT loss
  double learning_rate = 1e-4;
  std::string optimizer = "adam";
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  bool first_word_additive = false;
  double kl_weight = 1.0;
  int max_decode_len = 21;  // 20 tokens + EOS

  void validate() const;
};

// Adaptive-moment optimizer over one or more parameter collections, with
// global gradient-norm clipping folded into step().
class Adam {
 public:
  Adam(std::vector<ad::ParamSet*> sets, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  // Clips the combined gradient norm to clip_norm (when > 0), then applies
  // one bias-corrected update. Returns the pre-clip gradient norm.
  double step(double clip_norm);

  long steps_taken() const { return t_; }
  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  struct Slot {
    ad::Param* p;
    ad::Mat m, v;
  };
  std::vector<Slot> slots_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

// Loss components averaged over the batch. finite is false when any
// component came out NaN/inf, in which case no update was applied and
// diagnostics names the first offending part.
struct StepLosses {
  double l_para = 0.0;  // negative ELBO (ce + kl_weight * kl)
  double ce = 0.0;
  double kl = 0.0;
  double l_p = 0.0;
  std::vector<double> l_s;  // one per trained round in bt_rounds
  double total = 0.0;
  double grad_norm = 0.0;
  bool finite = true;
  std::string diagnostics;
};

// One optimizer update from one batch: teacher-forced reconstruction, then
// the relaxed round chain (round 1 reuses the posterior sample; later
// rounds draw from the prior), back-translation of each chained output and
// of the ground-truth paraphrase, single backward pass over the sum.
StepLosses training_step(const Batch& batch, Paraphraser& para, BackTranslator& bt,
                         const TrainConfig& cfg, double tau, Rng& rng, Adam& opt);

struct EpochStats {
  int epoch = 0;
  double tau = 0.0;
  StepLosses mean;
  int steps = 0;
};

struct TrainResult {
  int epochs_run = 0;
  std::vector<EpochStats> history;
  std::string final_checkpoint;  // path base of the release model
};

// Full training loop: per-epoch shuffled batches, temperature from the
// schedule, per-epoch checkpoints (parameters + JSON sidecar + optimizer/
// RNG state) and an append-only metrics.jsonl in out_dir. Resumes from the
// newest checkpoint found in out_dir. The final epoch's checkpoint is
// re-saved as "final" and marked in its sidecar.
TrainResult run_training(const TrainConfig& cfg, const std::vector<ParaphrasePair>& pairs,
                         const Vocabulary& vocab, Paraphraser& para, BackTranslator& bt,
                         const std::string& out_dir, const std::string& vocab_hash = "");

struct AblationRow {
  double lambda = 0.0;
  double p_bleu = 0.0;
  std::string checkpoint;
};

// Trains one fresh model pair per lambda on the same seed and budget, then
// generates `rounds` paraphrase rounds for each validation sentence and
// reports how self-similar the rounds are (p-BLEU, higher = less diverse).
// Duplicate lambdas collapse to one run; rows come back sorted ascending.
std::vector<AblationRow> ablate_lambda(const TrainConfig& base,
                                       const ParaphraserConfig& para_cfg,
                                       const BTConfig& bt_cfg,
                                       const std::vector<double>& lambdas,
                                       const std::vector<ParaphrasePair>& train_pairs,
                                       const std::vector<ParaphrasePair>& valid_pairs,
                                       const Vocabulary& vocab, int rounds,
                                       const std::string& out_dir);

}  // namespace btmpg
