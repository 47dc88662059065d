// Long-running directional check, kept out of the default ctest run.
//
// Trains the full pipeline three times for two epochs on a 5k-pair corpus
// (set BTMPG_QUORA_CSV to use a real question-pair dump; a synthetic
// template corpus is generated otherwise) and then asserts two soft trends
// on 200 held-out sentences:
//   10a  round-5 outputs sit further from their inputs than round-1
//        outputs do (self-BLEU falls with rounds), and
//   10b  raising the round-loss weight lambda makes successive rounds more
//        self-similar (pairwise BLEU across 5 rounds is non-decreasing in
//        lambda over {0, 1, 5}).
// These are trend assertions on a deliberately small run; they gate
// releases only when enabled on purpose.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "btmpg/backtranslator.hpp"
#include "btmpg/corpus.hpp"
#include "btmpg/cvae.hpp"
#include "btmpg/gumbel.hpp"
#include "btmpg/inference.hpp"
#include "btmpg/metrics.hpp"
#include "btmpg/rng.hpp"
#include "btmpg/trainer.hpp"
#include "btmpg/vocab.hpp"

using namespace btmpg;

namespace {

std::vector<ParaphrasePair> synthetic_pairs(int count, std::uint64_t seed) {
  const std::vector<std::string> nouns = {
      "python",  "guitar",   "chess",    "spanish", "cooking",  "algebra",
      "drawing", "investing", "running",  "poetry",  "physics",  "gardening",
      "karate",  "singing",  "sailing",  "history", "coding",   "yoga",
      "french",  "baking",   "surfing",  "piano",   "writing",  "biology",
      "dancing", "fishing",  "climbing", "swimming", "painting", "economics"};
  const std::vector<std::string> adjectives = {
      "hard", "popular", "expensive", "useful", "boring",
      "fun",  "risky",   "healthy",   "common", "difficult"};
  const std::vector<std::string> things = {"laptop", "bike",  "camera", "phone",
                                           "car",    "house", "watch",  "desk"};
  Rng rng(seed);
  auto pick = [&](const std::vector<std::string>& v) {
    return v[static_cast<int>(rng.uniform() * v.size())];
  };
  // Like real duplicate-question pairs, the two sides share long spans;
  // without that overlap corpus BLEU against the input degenerates to 0
  // for any model and the drift trend becomes unmeasurable.
  std::vector<ParaphrasePair> pairs;
  pairs.reserve(count);
  while (static_cast<int>(pairs.size()) < count) {
    std::string a, b;
    switch (static_cast<int>(rng.uniform() * 6)) {
      case 0: {
        const std::string n = pick(nouns);
        a = "how can i learn " + n + " quickly";
        b = "how can i learn " + n + " fast";
        break;
      }
      case 1: {
        const std::string n = pick(nouns);
        a = "what is the best way to learn " + n;
        b = "what is the easiest way to learn " + n;
        break;
      }
      case 2: {
        const std::string n = pick(nouns), j = pick(adjectives);
        a = "why is " + n + " so " + j;
        b = "why is " + n + " considered so " + j;
        break;
      }
      case 3: {
        const std::string x = pick(things), y = pick(things);
        a = "should i buy a " + x + " or a " + y;
        b = "is it better to buy a " + x + " or a " + y;
        break;
      }
      case 4: {
        const std::string n = pick(nouns);
        a = "what does " + n + " mean";
        b = "what does " + n + " really mean";
        break;
      }
      default: {
        const std::string n = pick(nouns), j = pick(adjectives);
        a = "is " + n + " " + j + " for beginners";
        b = "is " + n + " too " + j + " for beginners";
        break;
      }
    }
    if (rng.uniform() < 0.5) std::swap(a, b);
    pairs.push_back(make_paraphrase_pair(a, b));
  }
  return pairs;
}

struct RunScore {
  double lambda = 0.0;
  double p_bleu_5 = 0.0;
  double self_bleu_r1 = 0.0;
  double self_bleu_r5 = 0.0;
};

RunScore train_and_score(double lambda, const std::vector<ParaphrasePair>& train_pairs,
                         const std::vector<ParaphrasePair>& valid_pairs,
                         const Vocabulary& vocab) {
  ParaphraserConfig pc;
  pc.d_e = 24;
  pc.d_h = 48;
  pc.d_z = 12;
  pc.layers = 2;
  pc.vocab_size = vocab.size();
  BTConfig bc;
  bc.layers = 2;
  bc.model_dim = 32;
  bc.heads = 4;
  bc.ff_dim = 128;
  bc.vocab_size = vocab.size();

  TrainConfig cfg;
  cfg.lambda = lambda;
  cfg.epochs = 2;
  cfg.batch_size = 25;  // two epochs is a hard budget; smaller batches buy updates
  cfg.rounds_trained = 2;
  cfg.bt_rounds = {1, 2};
  cfg.learning_rate = 1.5e-3;
  cfg.clip_norm = 5.0;
  cfg.kl_weight = 0.1;
  cfg.max_decode_len = 12;
  cfg.seed = 13;

  Paraphraser para(pc, cfg.seed);
  BackTranslator bt(bc, cfg.seed + 1);
  Adam opt({&para.params(), &bt.params()}, cfg.learning_rate);
  Rng rng(cfg.seed);
  TemperatureSchedule sched;
  sched.tau_max = cfg.tau_max;
  sched.total_epochs = cfg.epochs;
  sched.increasing = cfg.tau_increasing;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double tau = temperature(epoch, sched);
    auto batches = make_batches(train_pairs, vocab, cfg.batch_size, 20,
                                cfg.seed * 1000003ULL + epoch, true);
    double mean_total = 0.0;
    int steps = 0;
    for (const auto& batch : batches) {
      StepLosses s = training_step(batch, para, bt, cfg, tau, rng, opt);
      if (!s.finite) {
        std::printf("  lambda=%g epoch %d: %s\n", lambda, epoch, s.diagnostics.c_str());
        continue;
      }
      mean_total += s.total;
      ++steps;
      if (steps % 20 == 0) {
        std::printf("  lambda=%g epoch %d step %d/%zu total %.3f\n", lambda, epoch,
                    steps, batches.size(), s.total);
        std::fflush(stdout);
      }
    }
    std::printf("  lambda=%g epoch %d done, mean total %.3f\n", lambda, epoch,
                mean_total / std::max(1, steps));
    std::fflush(stdout);
  }

  const int rounds = 5;
  GenerateOptions gen;
  gen.max_len = cfg.max_decode_len;
  std::vector<Corpus> round_corpora(rounds);
  Corpus originals;
  for (std::size_t i = 0; i < valid_pairs.size(); ++i) {
    Rng line_rng(cfg.seed * 1000003ULL + i);
    auto rr = generate_rounds(para, vocab, valid_pairs[i].raw_source, rounds, line_rng, gen);
    for (int r = 0; r < rounds; ++r) round_corpora[r].push_back(rr[r].tokens);
    originals.push_back(valid_pairs[i].source_tokens);
  }

  RunScore score;
  score.lambda = lambda;
  score.p_bleu_5 = p_bleu(round_corpora);
  score.self_bleu_r1 = self_bleu(round_corpora.front(), originals);
  score.self_bleu_r5 = self_bleu(round_corpora.back(), originals);
  std::printf("  lambda=%g: self-BLEU r1 %.2f r5 %.2f, pairwise over 5 rounds %.2f\n",
              lambda, score.self_bleu_r1, score.self_bleu_r5, score.p_bleu_5);
  std::fflush(stdout);
  return score;
}

}  // namespace

int main() {
  std::vector<ParaphrasePair> pairs;
  if (const char* path = std::getenv("BTMPG_QUORA_CSV")) {
    std::printf("loading question pairs from %s\n", path);
    auto loaded = load_quora(path);
    pairs = std::move(loaded.pairs);
    if (pairs.size() > 5000) pairs.resize(5000);
  } else {
    std::printf("BTMPG_QUORA_CSV not set; using the synthetic template corpus\n");
    pairs = synthetic_pairs(5000, 20260816);
  }
  if (pairs.size() < 1000) {
    std::printf("[FAIL] 10 directional drift trend: only %zu usable pairs\n", pairs.size());
    return 1;
  }

  auto split = make_splits(pairs.size(), 200, 0, 13);
  std::vector<ParaphrasePair> train_pairs, valid_pairs;
  for (auto i : split.train) train_pairs.push_back(pairs[i]);
  for (auto i : split.valid) valid_pairs.push_back(pairs[i]);

  std::vector<std::vector<std::string>> token_lists;
  for (const auto& p : train_pairs) {
    token_lists.push_back(p.source_tokens);
    token_lists.push_back(p.target_tokens);
  }
  Vocabulary vocab = Vocabulary::build(token_lists, 4000);
  std::printf("%zu train / %zu valid pairs, vocabulary %d\n", train_pairs.size(),
              valid_pairs.size(), vocab.size());

  std::vector<RunScore> scores;
  for (double lambda : {0.0, 1.0, 5.0})
    scores.push_back(train_and_score(lambda, train_pairs, valid_pairs, vocab));

  int failures = 0;
  const RunScore& anchored = scores[1];  // lambda = 1
  if (anchored.self_bleu_r5 < anchored.self_bleu_r1) {
    std::printf("[PASS] 10a round drift: self-BLEU %.2f (round 1) -> %.2f (round 5)\n",
                anchored.self_bleu_r1, anchored.self_bleu_r5);
  } else {
    std::printf("[FAIL] 10a round drift: self-BLEU %.2f (round 1) -> %.2f (round 5)\n",
                anchored.self_bleu_r1, anchored.self_bleu_r5);
    ++failures;
  }
  const bool nondecreasing = scores[0].p_bleu_5 <= scores[1].p_bleu_5 &&
                             scores[1].p_bleu_5 <= scores[2].p_bleu_5;
  std::printf("[%s] 10b anchoring strength: pairwise BLEU %.2f (l=0) %.2f (l=1) %.2f (l=5)\n",
              nondecreasing ? "PASS" : "FAIL", scores[0].p_bleu_5, scores[1].p_bleu_5,
              scores[2].p_bleu_5);
  if (!nondecreasing) ++failures;
  return failures;
}
