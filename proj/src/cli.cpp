#include "btmpg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "btmpg/backtranslator.hpp"
#include "btmpg/checkpoint.hpp"
#include "btmpg/config.hpp"
#include "btmpg/corpus.hpp"
#include "btmpg/cvae.hpp"
#include "btmpg/inference.hpp"
#include "btmpg/metrics.hpp"
#include "btmpg/trainer.hpp"
#include "btmpg/vocab.hpp"

namespace btmpg {

namespace {

namespace fs = std::filesystem;

// Exit-code carriers: 2 for bad usage or configuration, 1 for missing or
// inconsistent data.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// The full key vocabulary a config file may use, across all commands. A
// command reads its own subset; everything else is tolerated so one file
// can drive a whole pipeline, and anything outside the list is rejected.
const std::vector<std::string>& all_config_keys() {
  static const std::vector<std::string> keys = {
      // model
      "d_e", "d_h", "d_z", "layers", "bt_layers", "bt_dim", "bt_heads", "bt_ff",
      "vocab_size",
      // training
      "lambda", "epochs", "batch_size", "tau_max", "tau_increasing", "rounds_trained",
      "bt_rounds", "learning_rate", "optimizer", "clip_norm", "seed",
      "first_word_additive", "kl_weight", "max_decode_len",
      // data
      "dataset", "data", "source", "target", "valid_size", "test_size",
      // generation
      "rounds", "sample", "checkpoint", "vocab", "input",
      // evaluation
      "originals", "hypotheses", "rounds_dir", "references", "scores_file", "scorer_cmd",
      // ablation
      "lambdas",
  };
  return keys;
}

void reject_unknown_keys(ConfigReader& r) {
  for (const std::string& k : all_config_keys()) r.has(k);
  const std::vector<std::string> bad = r.unknown_keys();
  if (bad.empty()) return;
  std::string msg = "unknown config keys:";
  for (const std::string& k : bad) msg += " " + k;
  throw UsageError(msg);
}

// One flag per config key; provided flags overwrite file values, so the
// precedence is defaults < file < command line.
struct KeyFlag {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

class KeyFlagSet {
 public:
  void add(CLI::App* cmd, const std::string& key, const std::string& help) {
    flags_.push_back(std::make_unique<KeyFlag>());
    KeyFlag& kf = *flags_.back();
    kf.key = key;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    kf.opt = cmd->add_option(flag, kf.value, help);
  }

  void apply(std::map<std::string, std::string>& kv) const {
    for (const auto& kf : flags_)
      if (kf->opt->count() > 0) kv[kf->key] = kf->value;
  }

 private:
  std::vector<std::unique_ptr<KeyFlag>> flags_;
};

std::map<std::string, std::string> merged_config(const std::string& config_path,
                                                 const KeyFlagSet& flags) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) {
    try {
      kv = load_config_file(config_path);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    } catch (const std::runtime_error& e) {
      throw DataError(e.what());
    }
  }
  flags.apply(kv);
  return kv;
}

// ---- settings shared by train and ablate ---------------------------------

struct RunSettings {
  TrainConfig train;
  ParaphraserConfig para;
  BTConfig bt;
  int vocab_cap = 20000;
  std::string dataset = "parallel";
  std::string data, source, target;
  int valid_size = -1;  // -1 = size rule below
  int test_size = -1;
};

RunSettings read_run_settings(ConfigReader& r) {
  RunSettings s;
  s.train.lambda = r.number("lambda", s.train.lambda);
  s.train.epochs = r.integer("epochs", s.train.epochs);
  s.train.batch_size = r.integer("batch_size", s.train.batch_size);
  s.train.tau_max = r.number("tau_max", s.train.tau_max);
  s.train.tau_increasing = r.flag("tau_increasing", s.train.tau_increasing);
  s.train.rounds_trained = r.integer("rounds_trained", s.train.rounds_trained);
  s.train.bt_rounds = r.int_list("bt_rounds", s.train.bt_rounds);
  s.train.learning_rate = r.number("learning_rate", s.train.learning_rate);
  s.train.optimizer = r.text("optimizer", s.train.optimizer);
  s.train.clip_norm = r.number("clip_norm", s.train.clip_norm);
  s.train.seed = r.unsigned64("seed", s.train.seed);
  s.train.first_word_additive = r.flag("first_word_additive", s.train.first_word_additive);
  s.train.kl_weight = r.number("kl_weight", s.train.kl_weight);
  s.train.max_decode_len = r.integer("max_decode_len", s.train.max_decode_len);

  s.para.d_e = r.integer("d_e", s.para.d_e);
  s.para.d_h = r.integer("d_h", s.para.d_h);
  s.para.d_z = r.integer("d_z", s.para.d_z);
  s.para.layers = r.integer("layers", s.para.layers);
  s.bt.layers = r.integer("bt_layers", s.bt.layers);
  s.bt.model_dim = r.integer("bt_dim", s.bt.model_dim);
  s.bt.heads = r.integer("bt_heads", s.bt.heads);
  s.bt.ff_dim = r.integer("bt_ff", s.bt.ff_dim);
  s.vocab_cap = r.integer("vocab_size", s.vocab_cap);

  s.dataset = r.text("dataset", s.dataset);
  s.data = r.text("data", s.data);
  s.source = r.text("source", s.source);
  s.target = r.text("target", s.target);
  s.valid_size = r.integer("valid_size", s.valid_size);
  s.test_size = r.integer("test_size", s.test_size);
  return s;
}

// Effective settings echoed back out, one line per key.
std::map<std::string, std::string> settings_map(const RunSettings& s) {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, auto v) { m[k] = std::to_string(v); };
  put("lambda", s.train.lambda);
  put("epochs", s.train.epochs);
  put("batch_size", s.train.batch_size);
  put("tau_max", s.train.tau_max);
  put("tau_increasing", int(s.train.tau_increasing));
  put("rounds_trained", s.train.rounds_trained);
  put("learning_rate", s.train.learning_rate);
  put("clip_norm", s.train.clip_norm);
  put("seed", s.train.seed);
  put("first_word_additive", int(s.train.first_word_additive));
  put("kl_weight", s.train.kl_weight);
  put("max_decode_len", s.train.max_decode_len);
  put("d_e", s.para.d_e);
  put("d_h", s.para.d_h);
  put("d_z", s.para.d_z);
  put("layers", s.para.layers);
  put("bt_layers", s.bt.layers);
  put("bt_dim", s.bt.model_dim);
  put("bt_heads", s.bt.heads);
  put("bt_ff", s.bt.ff());
  put("vocab_size", s.vocab_cap);
  put("valid_size", s.valid_size);
  put("test_size", s.test_size);
  m["optimizer"] = s.train.optimizer;
  m["dataset"] = s.dataset;
  m["data"] = s.data;
  m["source"] = s.source;
  m["target"] = s.target;
  std::string rounds;
  for (std::size_t i = 0; i < s.train.bt_rounds.size(); ++i) {
    if (i) rounds += ",";
    rounds += std::to_string(s.train.bt_rounds[i]);
  }
  m["bt_rounds"] = rounds;
  return m;
}

std::vector<ParaphrasePair> load_dataset(const RunSettings& s) {
  try {
    if (s.dataset == "quora") {
      if (s.data.empty()) throw UsageError("dataset quora needs data=<csv path>");
      return load_quora(s.data).pairs;
    }
    if (s.dataset == "mscoco") {
      if (s.data.empty()) throw UsageError("dataset mscoco needs data=<json path>");
      return load_mscoco(s.data).pairs;
    }
    if (s.dataset == "parallel") {
      if (s.source.empty() || s.target.empty())
        throw UsageError("dataset parallel needs source= and target= paths");
      return load_parallel(s.source, s.target).pairs;
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  throw UsageError("unknown dataset '" + s.dataset + "' (quora, mscoco, parallel)");
}

std::size_t split_rule(int configured, std::size_t n) {
  if (configured >= 0) return static_cast<std::size_t>(configured);
  return std::min<std::size_t>(3000, n / 10);
}

struct PreparedData {
  std::vector<ParaphrasePair> train, valid, test;
  Vocabulary vocab;
  std::string vocab_hash;
};

PreparedData prepare_data(const RunSettings& s, const std::string& out_dir) {
  std::vector<ParaphrasePair> pairs = load_dataset(s);
  if (pairs.empty()) throw DataError("dataset is empty after filtering");

  const std::size_t v = split_rule(s.valid_size, pairs.size());
  const std::size_t t = split_rule(s.test_size, pairs.size());
  SplitIndices idx;
  try {
    idx = make_splits(pairs.size(), v, t, s.train.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  PreparedData d;
  auto take = [&](const std::vector<std::size_t>& which) {
    std::vector<ParaphrasePair> out;
    out.reserve(which.size());
    for (std::size_t i : which) out.push_back(pairs[i]);
    return out;
  };
  d.train = take(idx.train);
  d.valid = take(idx.valid);
  d.test = take(idx.test);

  std::vector<std::vector<std::string>> sents;
  sents.reserve(d.train.size() * 2);
  for (const ParaphrasePair& p : d.train) {
    sents.push_back(p.source_tokens);
    sents.push_back(p.target_tokens);
  }
  d.vocab = Vocabulary::build(sents, static_cast<std::size_t>(s.vocab_cap));

  fs::create_directories(out_dir);
  d.vocab.save(out_dir + "/vocab.txt");
  d.vocab_hash = hash_file(out_dir + "/vocab.txt");
  save_split_manifest(out_dir + "/split_train.txt", idx.train);
  save_split_manifest(out_dir + "/split_valid.txt", idx.valid);
  save_split_manifest(out_dir + "/split_test.txt", idx.test);
  return d;
}

void write_manifest(const std::string& path, nlohmann::json j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << j.dump(2) << '\n';
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config_path, out_dir;
  KeyFlagSet flags;
};

int cmd_train(const TrainArgs& a) {
  if (a.out_dir.empty()) throw UsageError("train needs --out");
  auto kv = merged_config(a.config_path, a.flags);
  ConfigReader r(kv);
  RunSettings s = read_run_settings(r);
  reject_unknown_keys(r);

  const std::string started = now_iso8601();
  PreparedData d = prepare_data(s, a.out_dir);
  if (d.train.empty()) throw DataError("no training pairs left after splitting");

  s.para.vocab_size = d.vocab.size();
  s.bt.vocab_size = d.vocab.size();
  try {
    s.train.validate();
    s.para.validate();
    s.bt.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  Paraphraser para(s.para, s.train.seed);
  BackTranslator bt(s.bt, s.train.seed + 1);

  std::cout << "training on " << d.train.size() << " pairs (" << d.valid.size()
            << " valid, " << d.test.size() << " test), vocabulary " << d.vocab.size()
            << "\n";
  TrainResult res = run_training(s.train, d.train, d.vocab, para, bt, a.out_dir,
                                 d.vocab_hash);
  for (const EpochStats& e : res.history) {
    std::printf("epoch %d  tau %.4f  l_para %.4f  l_p %.4f  total %.4f  grad %.3f\n",
                e.epoch, e.tau, e.mean.l_para, e.mean.l_p, e.mean.total,
                e.mean.grad_norm);
  }

  nlohmann::json m;
  m["command"] = "train";
  m["config"] = settings_map(s);
  m["seed"] = s.train.seed;
  m["out_dir"] = a.out_dir;
  m["config_file"] = a.config_path;
  m["checkpoint"] = res.final_checkpoint;
  m["checkpoint_hash"] = hash_file(res.final_checkpoint + ".bin");
  m["vocab_hash"] = d.vocab_hash;
  m["started"] = started;
  m["finished"] = now_iso8601();
  write_manifest(a.out_dir + "/manifest.json", m);
  std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
  return 0;
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string config_path, out_dir;
  KeyFlagSet flags;
};

struct LoadedModel {
  ParaphraserConfig para_cfg;
  BTConfig bt_cfg;
  std::unique_ptr<Paraphraser> para;
  std::unique_ptr<BackTranslator> bt;
  CheckpointMeta meta;
  std::string blob_hash;
};

int meta_int(const CheckpointMeta& meta, const std::string& key) {
  auto it = meta.config.find(key);
  if (it == meta.config.end())
    throw DataError("checkpoint sidecar is missing '" + key + "'");
  return std::stoi(it->second);
}

LoadedModel load_model(const std::string& checkpoint_base, const Vocabulary& vocab,
                       const std::string& vocab_path) {
  LoadedModel m;
  const std::string meta_path = checkpoint_base + ".json";
  const std::string blob_path = checkpoint_base + ".bin";
  if (!fs::exists(meta_path) || !fs::exists(blob_path))
    throw DataError("checkpoint not found at " + checkpoint_base + " (.bin/.json)");
  m.meta = load_meta_json(meta_path);

  if (!m.meta.vocab_hash.empty()) {
    const std::string have = hash_file(vocab_path);
    if (have != m.meta.vocab_hash)
      throw DataError("vocabulary hash mismatch: checkpoint built against " +
                      m.meta.vocab_hash + ", " + vocab_path + " hashes to " + have);
  }

  m.para_cfg.d_e = meta_int(m.meta, "d_e");
  m.para_cfg.d_h = meta_int(m.meta, "d_h");
  m.para_cfg.d_z = meta_int(m.meta, "d_z");
  m.para_cfg.layers = meta_int(m.meta, "layers");
  m.para_cfg.vocab_size = meta_int(m.meta, "vocab_size");
  m.bt_cfg.layers = meta_int(m.meta, "bt_layers");
  m.bt_cfg.model_dim = meta_int(m.meta, "bt_dim");
  m.bt_cfg.heads = meta_int(m.meta, "bt_heads");
  m.bt_cfg.ff_dim = meta_int(m.meta, "bt_ff");
  m.bt_cfg.vocab_size = m.para_cfg.vocab_size;
  if (m.para_cfg.vocab_size != vocab.size())
    throw DataError("checkpoint vocabulary size " +
                    std::to_string(m.para_cfg.vocab_size) + " != loaded vocabulary " +
                    std::to_string(vocab.size()));

  m.para = std::make_unique<Paraphraser>(m.para_cfg, 0);
  m.bt = std::make_unique<BackTranslator>(m.bt_cfg, 1);
  load_param_blob(blob_path, {&m.para->params(), &m.bt->params()});
  m.blob_hash = hash_file(blob_path);
  return m;
}

int cmd_generate(const GenerateArgs& a) {
  if (a.out_dir.empty()) throw UsageError("generate needs --out");
  auto kv = merged_config(a.config_path, a.flags);
  ConfigReader r(kv);
  const std::string checkpoint = r.text("checkpoint", "");
  const std::string vocab_path = r.text("vocab", "");
  const std::string input_path = r.text("input", "");
  const int rounds = r.integer("rounds", 1);
  const std::uint64_t seed = r.unsigned64("seed", 0);
  GenerateOptions opt;
  opt.sample = r.flag("sample", false);
  opt.max_len = r.integer("max_decode_len", opt.max_len);
  reject_unknown_keys(r);

  if (rounds < 1) throw UsageError("rounds must be >= 1");
  if (checkpoint.empty() || vocab_path.empty() || input_path.empty())
    throw UsageError("generate needs checkpoint=, vocab= and input=");

  Vocabulary vocab;
  try {
    vocab = Vocabulary::load(vocab_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  LoadedModel model = load_model(checkpoint, vocab, vocab_path);

  std::vector<std::string> lines;
  try {
    lines = read_lines(input_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  const std::string started = now_iso8601();
  try {
    generate_to_directory(*model.para, vocab, lines, rounds, seed, a.out_dir,
                          model.blob_hash, opt);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  // fold the run details into the manifest the generator already wrote
  nlohmann::json m;
  {
    std::ifstream is(a.out_dir + "/manifest.json");
    is >> m;
  }
  m["command"] = "generate";
  m["checkpoint"] = checkpoint;
  m["vocab"] = vocab_path;
  m["input"] = input_path;
  m["out_dir"] = a.out_dir;
  m["started"] = started;
  m["finished"] = now_iso8601();
  write_manifest(a.out_dir + "/manifest.json", m);

  std::cout << "wrote " << rounds << " round files for " << lines.size()
            << " sentences to " << a.out_dir << "\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string config_path, out_dir;
  KeyFlagSet flags;
};

void check_aligned(const std::string& name_a, std::size_t a, const std::string& name_b,
                   std::size_t b) {
  if (a == b) return;
  throw DataError("misaligned corpora: " + name_a + " has " + std::to_string(a) +
                  " lines but " + name_b + " has " + std::to_string(b) +
                  "; first offending line " + std::to_string(std::min(a, b) + 1));
}

std::vector<std::string> round_files(const std::string& dir) {
  std::vector<std::pair<int, std::string>> found;
  if (!fs::is_directory(dir)) throw DataError("rounds_dir is not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int idx = 0;
    if (std::sscanf(name.c_str(), "round_%d.txt", &idx) == 1 &&
        name == "round_" + std::to_string(idx) + ".txt")
      found.emplace_back(idx, entry.path().string());
  }
  if (found.empty()) throw DataError("no round_<i>.txt files in " + dir);
  std::sort(found.begin(), found.end());
  std::vector<std::string> paths;
  for (auto& [idx, p] : found) paths.push_back(p);
  return paths;
}

int cmd_evaluate(const EvaluateArgs& a) {
  auto kv = merged_config(a.config_path, a.flags);
  ConfigReader r(kv);
  const std::string originals_path = r.text("originals", "");
  const std::string hyp_path = r.text("hypotheses", "");
  const std::string rounds_dir = r.text("rounds_dir", "");
  const std::string refs_path = r.text("references", "");
  const std::string scores_path = r.text("scores_file", "");
  const std::string scorer_cmd = r.text("scorer_cmd", "");
  reject_unknown_keys(r);

  if (originals_path.empty()) throw UsageError("evaluate needs originals=");
  if (hyp_path.empty() == rounds_dir.empty())
    throw UsageError("evaluate needs exactly one of hypotheses= or rounds_dir=");

  std::vector<std::string> hyp_files =
      rounds_dir.empty() ? std::vector<std::string>{hyp_path} : round_files(rounds_dir);

  std::vector<std::string> orig_lines;
  std::vector<std::vector<std::string>> round_lines;
  try {
    orig_lines = read_lines(originals_path);
    for (const std::string& f : hyp_files) round_lines.push_back(read_lines(f));
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  for (std::size_t i = 0; i < hyp_files.size(); ++i)
    check_aligned(originals_path, orig_lines.size(), hyp_files[i],
                  round_lines[i].size());

  const Corpus originals = tokenize_lines(orig_lines);
  std::vector<Corpus> rounds;
  rounds.reserve(round_lines.size());
  for (const auto& lines : round_lines) rounds.push_back(tokenize_lines(lines));

  // scalar metrics score the last round; p-BLEU sees all of them
  const Corpus& hyp = rounds.back();
  const std::string& hyp_file = hyp_files.back();

  MetricsReport report;
  report.self_bleu = self_bleu(hyp, originals);
  report.self_ter = self_ter(hyp, originals);
  if (!refs_path.empty()) {
    std::vector<std::string> ref_lines;
    try {
      ref_lines = read_lines(refs_path);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    check_aligned(originals_path, orig_lines.size(), refs_path, ref_lines.size());
    report.bleu4 = corpus_bleu4(hyp, tokenize_lines(ref_lines));
  }
  if (rounds.size() >= 2) report.p_bleu = p_bleu(rounds);
  try {
    if (!scores_path.empty())
      report.semantic_score = mean_score_file(scores_path, hyp.size());
    else if (!scorer_cmd.empty())
      report.semantic_score =
          run_score_command(scorer_cmd, hyp_file, originals_path, hyp.size());
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  std::cout << report.to_json() << "\n";
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    {
      std::ofstream os(a.out_dir + "/report.json");
      os << report.to_json() << '\n';
    }
    nlohmann::json m;
    m["command"] = "evaluate";
    m["originals"] = originals_path;
    m["hypotheses"] = hyp_files;
    m["references"] = refs_path;
    m["out_dir"] = a.out_dir;
    m["started"] = now_iso8601();
    m["finished"] = now_iso8601();
    write_manifest(a.out_dir + "/manifest.json", m);
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
  std::string config_path, out_dir;
  KeyFlagSet flags;
};

int cmd_ablate(const AblateArgs& a) {
  if (a.out_dir.empty()) throw UsageError("ablate needs --out");
  auto kv = merged_config(a.config_path, a.flags);
  ConfigReader r(kv);
  RunSettings s = read_run_settings(r);
  std::vector<double> lambdas = r.number_list("lambdas", {0.0, 0.5, 1.0, 2.0, 5.0});
  const int rounds = r.integer("rounds", 10);
  reject_unknown_keys(r);

  if (lambdas.empty()) throw UsageError("ablate needs at least one lambda");
  if (rounds < 2) throw UsageError("ablate needs rounds >= 2 for p-bleu");

  std::vector<double> unique_sorted = lambdas;
  std::sort(unique_sorted.begin(), unique_sorted.end());
  unique_sorted.erase(std::unique(unique_sorted.begin(), unique_sorted.end()),
                      unique_sorted.end());
  if (unique_sorted.size() != lambdas.size())
    std::cerr << "warning: duplicate lambda values collapsed\n";

  const std::string started = now_iso8601();
  PreparedData d = prepare_data(s, a.out_dir);
  if (d.train.empty()) throw DataError("no training pairs left after splitting");
  if (d.valid.empty())
    throw DataError("ablation needs a validation split (valid_size was 0)");

  s.para.vocab_size = d.vocab.size();
  s.bt.vocab_size = d.vocab.size();
  try {
    s.train.validate();
    s.para.validate();
    s.bt.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::vector<AblationRow> rows =
      ablate_lambda(s.train, s.para, s.bt, unique_sorted, d.train, d.valid, d.vocab,
                    rounds, a.out_dir);

  std::string table = "lambda    p-bleu\n";
  bool nondecreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%-8g  %.2f\n", rows[i].lambda, rows[i].p_bleu);
    table += line;
    if (i > 0 && rows[i].p_bleu < rows[i - 1].p_bleu - 1e-9) nondecreasing = false;
  }
  table += rows.size() > 1
               ? (nondecreasing ? "p-bleu is nondecreasing in lambda\n"
                                : "p-bleu is not monotone in lambda\n")
               : "";
  std::cout << table;
  {
    std::ofstream os(a.out_dir + "/ablation.txt");
    os << table;
  }

  nlohmann::json jrows = nlohmann::json::array();
  for (const AblationRow& row : rows) {
    nlohmann::json jr;
    jr["lambda"] = row.lambda;
    jr["p_bleu"] = row.p_bleu;
    jr["checkpoint"] = row.checkpoint;
    jrows.push_back(jr);
  }
  nlohmann::json m;
  m["command"] = "ablate";
  m["config"] = settings_map(s);
  m["rounds"] = rounds;
  m["rows"] = jrows;
  m["out_dir"] = a.out_dir;
  m["started"] = started;
  m["finished"] = now_iso8601();
  {
    std::ofstream os(a.out_dir + "/ablation.json");
    os << jrows.dump(2) << '\n';
  }
  write_manifest(a.out_dir + "/manifest.json", m);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Multi-round paraphrase generation: train, generate, evaluate, ablate"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a paraphraser on a pair corpus");
  train->add_option("--config", train_args.config_path, "key=value settings file");
  train->add_option("--out", train_args.out_dir, "output directory")->required();
  for (const char* key :
       {"lambda", "epochs", "batch_size", "tau_max", "tau_increasing", "rounds_trained",
        "bt_rounds", "learning_rate", "optimizer", "clip_norm", "seed",
        "first_word_additive", "kl_weight", "max_decode_len", "d_e", "d_h", "d_z",
        "layers", "bt_layers", "bt_dim", "bt_heads", "bt_ff", "vocab_size", "dataset",
        "data", "source", "target", "valid_size", "test_size"})
    train_args.flags.add(train, key, "overrides config key " + std::string(key));

  GenerateArgs gen_args;
  CLI::App* gen = app.add_subcommand("generate", "Generate multi-round paraphrases");
  gen->add_option("--config", gen_args.config_path, "key=value settings file");
  gen->add_option("--out", gen_args.out_dir, "output directory")->required();
  for (const char* key :
       {"checkpoint", "vocab", "input", "rounds", "seed", "sample", "max_decode_len"})
    gen_args.flags.add(gen, key, "overrides config key " + std::string(key));

  EvaluateArgs eval_args;
  CLI::App* eval = app.add_subcommand("evaluate", "Score generated paraphrases");
  eval->add_option("--config", eval_args.config_path, "key=value settings file");
  eval->add_option("--out", eval_args.out_dir, "directory for report.json (optional)");
  for (const char* key : {"originals", "hypotheses", "rounds_dir", "references",
                          "scores_file", "scorer_cmd"})
    eval_args.flags.add(eval, key, "overrides config key " + std::string(key));

  AblateArgs abl_args;
  CLI::App* abl = app.add_subcommand("ablate", "Sweep the round-loss weight");
  abl->add_option("--config", abl_args.config_path, "key=value settings file");
  abl->add_option("--out", abl_args.out_dir, "output directory")->required();
  for (const char* key :
       {"lambdas", "rounds", "lambda", "epochs", "batch_size", "tau_max",
        "tau_increasing", "rounds_trained", "bt_rounds", "learning_rate", "optimizer",
        "clip_norm", "seed", "first_word_additive", "kl_weight", "max_decode_len", "d_e",
        "d_h", "d_z", "layers", "bt_layers", "bt_dim", "bt_heads", "bt_ff", "vocab_size",
        "dataset", "data", "source", "target", "valid_size", "test_size"})
    abl_args.flags.add(abl, key, "overrides config key " + std::string(key));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (gen->parsed()) return cmd_generate(gen_args);
    if (eval->parsed()) return cmd_evaluate(eval_args);
    if (abl->parsed()) return cmd_ablate(abl_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace btmpg
