#include "btmpg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "btmpg/checkpoint.hpp"
#include "btmpg/inference.hpp"
#include "btmpg/metrics.hpp"

namespace btmpg {

using ad::Mat;
using ad::Var;

void TrainConfig::validate() const {
  if (rounds_trained < 1)
    throw std::invalid_argument("train config: rounds_trained must be >= 1");
  if (lambda < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("train config: learning_rate must be > 0");
  if (optimizer != "adam")
    throw std::invalid_argument("train config: unknown optimizer " + optimizer);
  if (max_decode_len < 1)
    throw std::invalid_argument("train config: max_decode_len must be >= 1");
  for (int r : bt_rounds)
    if (r < 1 || r > rounds_trained)
      throw std::invalid_argument("train config: bt_rounds entries must name trained rounds");
}

Adam::Adam(std::vector<ad::ParamSet*> sets, double lr, double beta1, double beta2,
           double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (ad::ParamSet* s : sets)
    for (const auto& up : s->all())
      slots_.push_back({up.get(), Mat::Zero(up->rows(), up->cols()),
                        Mat::Zero(up->rows(), up->cols())});
}

double Adam::step(double clip_norm) {
  double sq = 0.0;
  for (const Slot& s : slots_) sq += s.p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double scale =
      (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  ++t_;
  const double mc = 1.0 - std::pow(b1_, double(t_));
  const double vc = 1.0 - std::pow(b2_, double(t_));
  for (Slot& s : slots_) {
    const Mat g = s.p->grad * scale;
    s.m = b1_ * s.m + (1.0 - b1_) * g;
    s.v = (b2_ * s.v.array() + (1.0 - b2_) * g.array().square()).matrix();
    s.p->value -=
        (lr_ * (s.m.array() / mc) / ((s.v.array() / vc).sqrt() + eps_)).matrix();
  }
  return norm;
}

void Adam::save(std::ostream& os) const {
  const std::int64_t t = t_;
  os.write(reinterpret_cast<const char*>(&t), sizeof t);
  for (const Slot& s : slots_) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m = s.m,
                                                                                 v = s.v;
    os.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
    os.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
  }
}

void Adam::load(std::istream& is) {
  std::int64_t t = 0;
  is.read(reinterpret_cast<char*>(&t), sizeof t);
  t_ = t;
  for (Slot& s : slots_) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(
        s.m.rows(), s.m.cols()),
        v(s.v.rows(), s.v.cols());
    is.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size());
    is.read(reinterpret_cast<char*>(v.data()), sizeof(double) * v.size());
    if (!is) throw std::runtime_error("optimizer state: truncated stream");
    s.m = m;
    s.v = v;
  }
}

namespace {

bool check_finite(double v, const char* what, StepLosses* acc) {
  if (std::isfinite(v)) return true;
  acc->finite = false;
  if (acc->diagnostics.empty())
    acc->diagnostics = std::string(what) + " is non-finite";
  return false;
}

}  // namespace

StepLosses training_step(const Batch& batch, Paraphraser& para, BackTranslator& bt,
                         const TrainConfig& cfg, double tau, Rng& rng, Adam& opt) {
  const int b_n = batch.size();
  para.params().zero_grad();
  bt.params().zero_grad();

  // How often each opening target word appears in this batch.
  std::map<int, int> opener_counts;
  for (int b = 0; b < b_n; ++b) ++opener_counts[batch.target_matrix(b, 1)];

  StepLosses acc;
  acc.l_s.assign(cfg.bt_rounds.size(), 0.0);
  const double inv_b = 1.0 / b_n;

  for (int b = 0; b < b_n; ++b) {
    ad::Tape t;
    const std::vector<int> src = batch.source_row(b);
    const std::vector<int> framed_tgt = batch.target_row(b);
    const std::vector<int> tgt_content(framed_tgt.begin() + 1, framed_tgt.end());
    std::vector<int> framed_src;
    framed_src.reserve(src.size() + 1);
    framed_src.push_back(Vocabulary::kBos);
    framed_src.insert(framed_src.end(), src.begin(), src.end());

    auto enc = para.encode_source(t, src);
    auto post = para.encode_posterior(t, tgt_content, enc);
    Eigen::RowVectorXd eps(para.config().d_z);
    for (int j = 0; j < eps.size(); ++j) eps(j) = rng.gaussian();
    Var z1 = para.sample_latent(t, post, eps);

    auto steps =
        para.decode_teacher_forced(t, framed_tgt, z1, enc, SourceRef::hard(src));
    const double coeff = first_word_coefficient(b_n, opener_counts[framed_tgt[1]]);
    auto pl = paraphrase_loss(t, steps, framed_tgt, post, coeff,
                              cfg.first_word_additive, cfg.kl_weight);

    SoftDecodeOptions dec_opt;
    dec_opt.max_len = cfg.max_decode_len;
    dec_opt.tau = tau;
    dec_opt.stop_at_eos = true;

    // Chained relaxed rounds. Round 1 decodes with the posterior sample so
    // that the recognition heads sit on the round-loss gradient path; later
    // rounds have no target to recognize and draw from the prior.
    std::vector<SoftSequence> rounds;
    for (int r = 1; r <= cfg.rounds_trained; ++r) {
      EncoderOutput enc_r = enc;
      SourceRef src_ref = SourceRef::hard(src);
      Var z = z1;
      if (r > 1) {
        const SoftSequence& prev = rounds.back();
        enc_r = para.encode_source_soft(t, prev.rows);
        src_ref = SourceRef::from_soft(prev.rows);
        Mat zp(1, para.config().d_z);
        for (int j = 0; j < zp.cols(); ++j) zp(0, j) = rng.gaussian();
        z = t.input(zp);
      }
      rounds.push_back(
          autoregressive_soft_decode(t, para, z, enc_r, src_ref, rng, dec_opt));
    }

    std::vector<SoftSequence> bt_in;
    for (int r : cfg.bt_rounds) bt_in.push_back(rounds[r - 1]);
    auto parts = bt_loss(t, bt, bt_in, tgt_content, framed_src, cfg.lambda);

    Var total = ad::add(pl.total, parts.total);

    const double v_para = pl.total.val()(0, 0);
    const double v_ce = pl.ce.val()(0, 0);
    const double v_kl = pl.kl.val()(0, 0);
    const double v_lp = parts.l_p.val()(0, 0);
    const double v_total = total.val()(0, 0);
    bool ok = check_finite(v_para, "l_para", &acc);
    ok = check_finite(v_lp, "l_p", &acc) && ok;
    for (std::size_t i = 0; i < parts.l_s.size(); ++i)
      ok = check_finite(parts.l_s[i].val()(0, 0), "l_s", &acc) && ok;
    if (!ok) {
      acc.diagnostics += " (batch sentence " + std::to_string(b) + ")";
      return acc;
    }

    acc.l_para += v_para * inv_b;
    acc.ce += v_ce * inv_b;
    acc.kl += v_kl * inv_b;
    acc.l_p += v_lp * inv_b;
    for (std::size_t i = 0; i < parts.l_s.size(); ++i)
      acc.l_s[i] += parts.l_s[i].val()(0, 0) * inv_b;
    acc.total += v_total * inv_b;

    t.backward(ad::scale(total, inv_b));
  }

  acc.grad_norm = opt.step(cfg.clip_norm);
  if (!std::isfinite(acc.grad_norm)) {
    acc.finite = false;
    acc.diagnostics = "gradient norm is non-finite";
  }
  return acc;
}

namespace {

std::map<std::string, std::string> config_map(const TrainConfig& cfg) {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, auto v) { m[k] = std::to_string(v); };
  put("lambda", cfg.lambda);
  put("epochs", cfg.epochs);
  put("batch_size", cfg.batch_size);
  put("tau_max", cfg.tau_max);
  put("tau_increasing", int(cfg.tau_increasing));
  put("rounds_trained", cfg.rounds_trained);
  put("learning_rate", cfg.learning_rate);
  put("clip_norm", cfg.clip_norm);
  put("seed", cfg.seed);
  put("first_word_additive", int(cfg.first_word_additive));
  put("kl_weight", cfg.kl_weight);
  put("max_decode_len", cfg.max_decode_len);
  m["optimizer"] = cfg.optimizer;
  std::string rounds;
  for (std::size_t i = 0; i < cfg.bt_rounds.size(); ++i) {
    if (i) rounds += ",";
    rounds += std::to_string(cfg.bt_rounds[i]);
  }
  m["bt_rounds"] = rounds;
  return m;
}

// Model dimensions ride along in the sidecar so a checkpoint is enough to
// rebuild both networks for generation.
std::map<std::string, std::string> config_map(const TrainConfig& cfg,
                                              const ParaphraserConfig& pc,
                                              const BTConfig& bc) {
  std::map<std::string, std::string> m = config_map(cfg);
  m["d_e"] = std::to_string(pc.d_e);
  m["d_h"] = std::to_string(pc.d_h);
  m["d_z"] = std::to_string(pc.d_z);
  m["layers"] = std::to_string(pc.layers);
  m["vocab_size"] = std::to_string(pc.vocab_size);
  m["bt_layers"] = std::to_string(bc.layers);
  m["bt_dim"] = std::to_string(bc.model_dim);
  m["bt_heads"] = std::to_string(bc.heads);
  m["bt_ff"] = std::to_string(bc.ff());
  return m;
}

constexpr char kStateMagic[9] = "BTMPGTS1";

void save_train_state(const std::string& path, const Adam& opt, const Rng& rng) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("train state: cannot write " + path);
  os.write(kStateMagic, 8);
  opt.save(os);
  rng.save(os);
}

void load_train_state(const std::string& path, Adam* opt, Rng* rng) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("train state: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kStateMagic, 8))
    throw std::runtime_error("train state: bad magic in " + path);
  opt->load(is);
  rng->load(is);
}

std::string epoch_base(const std::string& out_dir, int epoch) {
  return out_dir + "/checkpoint_epoch_" + std::to_string(epoch);
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const std::vector<ParaphrasePair>& pairs,
                         const Vocabulary& vocab, Paraphraser& para, BackTranslator& bt,
                         const std::string& out_dir, const std::string& vocab_hash) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("run_training: no training pairs");
  std::filesystem::create_directories(out_dir);

  Adam opt({&para.params(), &bt.params()}, cfg.learning_rate);
  Rng rng(cfg.seed);

  int start_epoch = 0;
  for (int e = cfg.epochs; e >= 1; --e) {
    if (std::filesystem::exists(epoch_base(out_dir, e) + ".json")) {
      load_param_blob(epoch_base(out_dir, e) + ".bin",
                      {&para.params(), &bt.params()});
      load_train_state(out_dir + "/state_epoch_" + std::to_string(e) + ".bin", &opt,
                       &rng);
      start_epoch = e;
      break;
    }
  }

  TemperatureSchedule sched;
  sched.tau_max = cfg.tau_max;
  sched.total_epochs = cfg.epochs;
  sched.increasing = cfg.tau_increasing;

  TrainResult result;
  std::ofstream metrics(out_dir + "/metrics.jsonl", std::ios::app);

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const double tau = temperature(epoch - 1, sched);
    auto batches = make_batches(pairs, vocab, cfg.batch_size, kMaxSentenceTokens,
                                cfg.seed * 1000003ULL + epoch, true);
    EpochStats stats;
    stats.epoch = epoch;
    stats.tau = tau;
    stats.mean.l_s.assign(cfg.bt_rounds.size(), 0.0);
    for (const Batch& batch : batches) {
      StepLosses losses = training_step(batch, para, bt, cfg, tau, rng, opt);
      if (!losses.finite)
        throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                 ": " + losses.diagnostics);
      stats.mean.l_para += losses.l_para;
      stats.mean.ce += losses.ce;
      stats.mean.kl += losses.kl;
      stats.mean.l_p += losses.l_p;
      for (std::size_t i = 0; i < losses.l_s.size(); ++i)
        stats.mean.l_s[i] += losses.l_s[i];
      stats.mean.total += losses.total;
      stats.mean.grad_norm += losses.grad_norm;
      ++stats.steps;
    }
    const double inv = stats.steps > 0 ? 1.0 / stats.steps : 0.0;
    stats.mean.l_para *= inv;
    stats.mean.ce *= inv;
    stats.mean.kl *= inv;
    stats.mean.l_p *= inv;
    for (double& v : stats.mean.l_s) v *= inv;
    stats.mean.total *= inv;
    stats.mean.grad_norm *= inv;

    nlohmann::json j;
    j["epoch"] = epoch;
    j["tau"] = tau;
    j["l_para"] = stats.mean.l_para;
    j["ce"] = stats.mean.ce;
    j["kl"] = stats.mean.kl;
    j["l_p"] = stats.mean.l_p;
    for (std::size_t i = 0; i < stats.mean.l_s.size(); ++i)
      j["l_s" + std::to_string(cfg.bt_rounds[i])] = stats.mean.l_s[i];
    j["total"] = stats.mean.total;
    j["grad_norm"] = stats.mean.grad_norm;
    j["steps"] = stats.steps;
    metrics << j.dump() << '\n';
    metrics.flush();

    CheckpointMeta meta;
    meta.config = config_map(cfg, para.config(), bt.config());
    meta.vocab_hash = vocab_hash;
    meta.epoch = epoch;
    meta.seed = cfg.seed;
    meta.final_epoch = epoch == cfg.epochs;
    const std::string base = epoch_base(out_dir, epoch);
    save_param_blob(base + ".bin", {&para.params(), &bt.params()});
    save_meta_json(base + ".json", meta);
    save_train_state(out_dir + "/state_epoch_" + std::to_string(epoch) + ".bin", opt,
                     rng);

    result.history.push_back(stats);
    ++result.epochs_run;
  }

  // The release model is the final epoch, re-saved under a stable name.
  CheckpointMeta final_meta;
  final_meta.config = config_map(cfg, para.config(), bt.config());
  final_meta.vocab_hash = vocab_hash;
  final_meta.epoch = cfg.epochs;
  final_meta.seed = cfg.seed;
  final_meta.final_epoch = true;
  save_param_blob(out_dir + "/final.bin", {&para.params(), &bt.params()});
  save_meta_json(out_dir + "/final.json", final_meta);
  result.final_checkpoint = out_dir + "/final";
  return result;
}

namespace {

std::string lambda_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<AblationRow> ablate_lambda(const TrainConfig& base,
                                       const ParaphraserConfig& para_cfg,
                                       const BTConfig& bt_cfg,
                                       const std::vector<double>& lambdas,
                                       const std::vector<ParaphrasePair>& train_pairs,
                                       const std::vector<ParaphrasePair>& valid_pairs,
                                       const Vocabulary& vocab, int rounds,
                                       const std::string& out_dir) {
  if (lambdas.empty()) throw std::invalid_argument("ablation: no lambda values");
  if (rounds < 2) throw std::invalid_argument("ablation: needs >= 2 rounds for p-bleu");
  if (valid_pairs.empty()) throw std::invalid_argument("ablation: no validation pairs");

  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<AblationRow> rows;
  for (double lambda : grid) {
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    const std::string run_dir = out_dir + "/lambda_" + lambda_tag(lambda);

    Paraphraser para(para_cfg, cfg.seed);
    BackTranslator bt(bt_cfg, cfg.seed + 1);
    TrainResult tr = run_training(cfg, train_pairs, vocab, para, bt, run_dir);

    std::vector<Corpus> round_corpora(rounds);
    for (std::size_t i = 0; i < valid_pairs.size(); ++i) {
      Rng rng(cfg.seed * 1000003ULL + i);
      const std::string src = detokenize(valid_pairs[i].source_tokens);
      auto rs = generate_rounds(para, vocab, src, rounds, rng);
      for (int r = 0; r < rounds; ++r) round_corpora[r].push_back(tokenize(rs[r].text));
    }

    AblationRow row;
    row.lambda = lambda;
    row.p_bleu = p_bleu(round_corpora);
    row.checkpoint = tr.final_checkpoint;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace btmpg
