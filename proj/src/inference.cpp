#include "btmpg/inference.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "btmpg/corpus.hpp"

namespace btmpg {

using ad::Mat;
using ad::Var;

DecodeResult greedy_decode(ad::Tape& t, const Paraphraser& model, Var z,
                           const EncoderOutput& enc, const SourceRef& src,
                           const GenerateOptions& opt, Rng* sampler) {
  if (opt.max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
  if (opt.sample && sampler == nullptr)
    throw std::invalid_argument("decode: sampling needs a random source");

  LstmState state = model.initial_decoder_state(t, enc);
  DecodeResult out;
  Mat attn(opt.max_len, enc.length);
  int emitted = 0;
  int prev = Vocabulary::kBos;
  for (int step = 0; step < opt.max_len; ++step) {
    Var e_d = model.embed_hard(t, {prev});
    auto [so, next] = model.decode_step(t, e_d, z, state, enc, src);
    state = next;
    const Mat& p = so.p.val();
    int pick = 0;
    if (opt.sample) {
      double u = sampler->uniform();
      double cum = 0.0;
      pick = static_cast<int>(p.cols()) - 1;
      for (int j = 0; j < p.cols(); ++j) {
        cum += p(0, j);
        if (u < cum) {
          pick = j;
          break;
        }
      }
    } else {
      Eigen::Index best = 0;
      p.row(0).maxCoeff(&best);
      pick = static_cast<int>(best);
    }
    if (pick == Vocabulary::kEos) break;
    attn.row(emitted) = so.p_a.val().row(0);
    out.token_ids.push_back(pick);
    ++emitted;
    prev = pick;
  }
  out.copy_attention = attn.topRows(emitted);
  return out;
}

std::vector<std::string> replace_unk(const std::vector<int>& token_ids,
                                     const ad::Mat& copy_attention,
                                     const std::vector<std::string>& source_tokens,
                                     const Vocabulary& vocab) {
  if (copy_attention.rows() != static_cast<Eigen::Index>(token_ids.size()))
    throw std::invalid_argument("unk repair: one attention row per token required");
  const std::string& unk_surface = vocab.token(Vocabulary::kUnk);
  // Attention spans source positions including the EOS slot; only content
  // positions can supply a replacement word.
  const int n_src = std::min<int>(static_cast<int>(source_tokens.size()),
                                  static_cast<int>(copy_attention.cols()));

  std::vector<std::string> out;
  out.reserve(token_ids.size());
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] != Vocabulary::kUnk) {
      out.push_back(vocab.token(token_ids[i]));
      continue;
    }
    int best = -1;
    for (int j = 0; j < n_src; ++j)
      if (best < 0 || copy_attention(i, j) > copy_attention(i, best)) best = j;
    if (best < 0) {
      out.push_back(unk_surface);
      continue;
    }
    if (source_tokens[best] != unk_surface) {
      out.push_back(source_tokens[best]);
      continue;
    }
    int fallback = -1;
    for (int j = 0; j < n_src; ++j) {
      if (source_tokens[j] == unk_surface) continue;
      if (fallback < 0 || copy_attention(i, j) > copy_attention(i, fallback)) fallback = j;
    }
    out.push_back(fallback >= 0 ? source_tokens[fallback] : unk_surface);
  }
  return out;
}

std::vector<RoundResult> generate_rounds(const Paraphraser& model, const Vocabulary& vocab,
                                         const std::string& sentence, int rounds, Rng& rng,
                                         const GenerateOptions& opt) {
  if (rounds < 1) throw std::invalid_argument("generate: rounds must be >= 1");
  std::vector<std::string> cur = tokenize(sentence);
  if (cur.empty()) throw std::invalid_argument("generate: empty input sentence");
  if (cur.size() > kMaxSentenceTokens) cur.resize(kMaxSentenceTokens);

  std::vector<RoundResult> results;
  results.reserve(rounds);
  for (int r = 1; r <= rounds; ++r) {
    std::vector<int> src_ids = vocab.encode(cur);
    src_ids.push_back(Vocabulary::kEos);

    ad::Tape t;  // per-round tape keeps memory flat across many rounds
    EncoderOutput enc = model.encode_source(t, src_ids);
    Mat zr(1, model.config().d_z);
    for (int j = 0; j < zr.cols(); ++j) zr(0, j) = rng.gaussian();
    Var z = t.input(zr);

    DecodeResult dec =
        greedy_decode(t, model, z, enc, SourceRef::hard(src_ids), opt, &rng);

    RoundResult rr;
    rr.round = r;
    rr.token_ids = dec.token_ids;
    rr.copy_attention = dec.copy_attention;
    rr.tokens = replace_unk(dec.token_ids, dec.copy_attention, cur, vocab);
    rr.text = detokenize(rr.tokens);
    results.push_back(std::move(rr));

    cur = tokenize(results.back().text);
    if (cur.size() > kMaxSentenceTokens) cur.resize(kMaxSentenceTokens);
  }
  return results;
}

void generate_to_directory(const Paraphraser& model, const Vocabulary& vocab,
                           const std::vector<std::string>& input_lines, int rounds,
                           std::uint64_t seed, const std::string& out_dir,
                           const std::string& checkpoint_hash, const GenerateOptions& opt) {
  if (rounds < 1) throw std::invalid_argument("generate: rounds must be >= 1");
  std::filesystem::create_directories(out_dir);

  std::vector<std::vector<std::string>> texts(rounds);
  for (auto& v : texts) v.reserve(input_lines.size());
  for (std::size_t i = 0; i < input_lines.size(); ++i) {
    Rng rng(seed * 1000003ULL + i);
    std::vector<RoundResult> rs;
    try {
      rs = generate_rounds(model, vocab, input_lines[i], rounds, rng, opt);
    } catch (const std::exception& e) {
      throw std::runtime_error("generate: input line " + std::to_string(i + 1) + ": " +
                               e.what());
    }
    for (int r = 0; r < rounds; ++r) texts[r].push_back(rs[r].text);
  }

  for (int r = 1; r <= rounds; ++r) {
    const std::string path = out_dir + "/round_" + std::to_string(r) + ".txt";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("generate: cannot write " + path);
    for (const std::string& line : texts[r - 1]) os << line << '\n';
  }

  nlohmann::json m;
  m["checkpoint_hash"] = checkpoint_hash;
  m["seed"] = seed;
  m["rounds"] = rounds;
  m["lines"] = input_lines.size();
  m["sampled"] = opt.sample;
  std::ofstream os(out_dir + "/manifest.json");
  os << m.dump(2) << '\n';
}

}  // namespace btmpg
