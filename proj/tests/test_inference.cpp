#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "btmpg/corpus.hpp"
#include "btmpg/inference.hpp"
#include "btmpg/trainer.hpp"

using namespace btmpg;
using ad::Mat;
using ad::Var;

namespace {

ParaphraserConfig tiny_cfg(int vocab) {
  ParaphraserConfig c;
  c.d_e = 8;
  c.d_h = 8;
  c.d_z = 4;
  c.layers = 2;
  c.vocab_size = vocab;
  return c;
}

Vocabulary words_vocab() {
  std::vector<std::vector<std::string>> sents = {
      {"what", "is", "the", "best", "way", "to", "cook", "rice"},
      {"how", "do", "i", "make", "fluffy", "grains"},
  };
  return Vocabulary::build(sents, 64);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("unk repair substitutes the most-attended source word") {
  Vocabulary v = words_vocab();
  // "modi" is out of vocabulary on purpose; repair works on surface tokens.
  std::vector<std::string> src = {"why", "did", "modi", "do", "it"};
  std::vector<int> out_ids = {v.id("what"), Vocabulary::kUnk, v.id("way")};
  Mat attn = Mat::Zero(3, 6);  // source content + EOS slot
  attn(1, 2) = 0.9;            // the UNK step attends to "modi"
  attn(1, 0) = 0.1;
  auto tokens = replace_unk(out_ids, attn, src, v);
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0] == "what");
  CHECK(tokens[1] == "modi");
  CHECK(tokens[2] == "way");
}

TEST_CASE("unk repair leaves outputs without unk untouched") {
  Vocabulary v = words_vocab();
  std::vector<int> out_ids = {v.id("how"), v.id("do"), v.id("i")};
  Mat attn = Mat::Constant(3, 4, 0.25);
  auto tokens = replace_unk(out_ids, attn, {"a", "b", "c"}, v);
  CHECK(tokens == std::vector<std::string>{"how", "do", "i"});
}

TEST_CASE("unk repair resolves each unk from its own attention row") {
  Vocabulary v = words_vocab();
  std::vector<std::string> src = {"alpha", "beta", "gamma", "delta"};
  std::vector<int> out_ids = {Vocabulary::kUnk, v.id("is"), Vocabulary::kUnk};
  Mat attn = Mat::Zero(3, 5);
  attn(0, 0) = 0.8;  // first unk -> position 0
  attn(2, 3) = 0.7;  // second unk -> position 3
  auto tokens = replace_unk(out_ids, attn, src, v);
  CHECK(tokens[0] == "alpha");
  CHECK(tokens[1] == "is");
  CHECK(tokens[2] == "delta");
}

TEST_CASE("unk repair falls back past a literal unk surface token") {
  Vocabulary v = words_vocab();
  const std::string unk = v.token(Vocabulary::kUnk);
  std::vector<std::string> src = {unk, "the", "zzz"};  // "the" is in vocabulary
  std::vector<int> out_ids = {Vocabulary::kUnk};
  Mat attn = Mat::Zero(1, 4);
  attn(0, 0) = 0.6;  // argmax lands on the unk surface
  attn(0, 1) = 0.3;
  attn(0, 2) = 0.1;
  auto tokens = replace_unk(out_ids, attn, src, v);
  CHECK(tokens[0] == "the");

  // with no source content at all the unk surface has to stay
  auto bare = replace_unk(out_ids, Mat::Zero(1, 1), {}, v);
  CHECK(bare[0] == unk);
}

TEST_CASE("unk repair wants one attention row per output token") {
  Vocabulary v = words_vocab();
  CHECK_THROWS(replace_unk({Vocabulary::kUnk, Vocabulary::kUnk}, Mat::Zero(1, 3),
                           {"a", "b"}, v));
}

TEST_CASE("greedy decode reproduces an overfit pair and respects the cap") {
  Vocabulary v = words_vocab();
  Paraphraser model(tiny_cfg(v.size()), 3);
  const std::vector<int> src_ids = [&] {
    auto ids = v.encode({"what", "is", "the", "best", "way", "to", "cook", "rice"});
    ids.push_back(Vocabulary::kEos);
    return ids;
  }();
  const std::vector<int> tgt_content = [&] {
    auto ids = v.encode({"how", "do", "i", "make", "fluffy", "grains"});
    ids.push_back(Vocabulary::kEos);
    return ids;
  }();
  std::vector<int> framed_tgt = {Vocabulary::kBos};
  framed_tgt.insert(framed_tgt.end(), tgt_content.begin(), tgt_content.end());

  Adam opt({&model.params()}, 0.01);
  Rng rng(5);
  Eigen::RowVectorXd eps(4);
  for (int step = 0; step < 200; ++step) {
    ad::Tape t;
    model.params().zero_grad();
    auto enc = model.encode_source(t, src_ids);
    auto post = model.encode_posterior(t, tgt_content, enc);
    for (int j = 0; j < 4; ++j) eps(j) = rng.gaussian();
    Var z = model.sample_latent(t, post, eps);
    auto steps = model.decode_teacher_forced(t, framed_tgt, z, enc, SourceRef::hard(src_ids));
    auto loss = paraphrase_loss(t, steps, framed_tgt, post, 1.0, false, 0.05);
    t.backward(loss.total);
    opt.step(0.0);
  }

  // At inference the latent comes from the posterior mean's neighborhood;
  // a strongly overfit decoder reproduces the target from z = mu.
  ad::Tape t;
  auto enc = model.encode_source(t, src_ids);
  auto post = model.encode_posterior(t, tgt_content, enc);
  Var z = model.sample_latent(t, post, Eigen::RowVectorXd::Zero(4));
  GenerateOptions opt_dec;
  auto dec = greedy_decode(t, model, z, enc, SourceRef::hard(src_ids), opt_dec);
  CHECK(dec.token_ids ==
        std::vector<int>(tgt_content.begin(), tgt_content.end() - 1));
  CHECK(dec.copy_attention.rows() == static_cast<int>(dec.token_ids.size()));

  // attention rows stay on the simplex while decoding
  for (int i = 0; i < dec.copy_attention.rows(); ++i) {
    CHECK(dec.copy_attention.row(i).sum() == doctest::Approx(1.0));
    CHECK(dec.copy_attention.row(i).minCoeff() >= 0.0);
  }

  // cap: an untrained model rambles but can never exceed max_len
  Paraphraser wild(tiny_cfg(v.size()), 77);
  ad::Tape t2;
  auto enc2 = wild.encode_source(t2, src_ids);
  Var z2 = t2.input(Mat::Constant(1, 4, 0.3));
  GenerateOptions capped;
  capped.max_len = 5;
  auto dec2 = greedy_decode(t2, wild, z2, enc2, SourceRef::hard(src_ids), capped);
  CHECK(dec2.token_ids.size() <= 5);
}

TEST_CASE("generate_rounds: count, indices, determinism, chaining") {
  Vocabulary v = words_vocab();
  Paraphraser model(tiny_cfg(v.size()), 11);
  const std::string input = "what is the best way to cook rice";

  Rng rng_a(42);
  auto rounds_a = generate_rounds(model, v, input, 3, rng_a);
  REQUIRE(rounds_a.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(rounds_a[i].round == i + 1);
    CHECK(rounds_a[i].token_ids.size() <= 21);
    CHECK(rounds_a[i].tokens.size() == rounds_a[i].token_ids.size());
  }

  Rng rng_b(42);
  auto rounds_b = generate_rounds(model, v, input, 3, rng_b);
  for (int i = 0; i < 3; ++i) CHECK(rounds_a[i].text == rounds_b[i].text);

  // chaining: round 2 equals a single round run on round 1's repaired text
  // with the continued random stream
  Rng rng_c(42);
  auto first = generate_rounds(model, v, input, 1, rng_c);
  auto second = generate_rounds(model, v, first[0].text, 1, rng_c);
  CHECK(second[0].text == rounds_a[1].text);

  CHECK_THROWS(generate_rounds(model, v, "", 1, rng_a));
  CHECK_THROWS(generate_rounds(model, v, input, 0, rng_a));
}

TEST_CASE("sampling decode is reproducible and changes with the seed") {
  Vocabulary v = words_vocab();
  Paraphraser model(tiny_cfg(v.size()), 11);
  GenerateOptions opt;
  opt.sample = true;
  const std::string input = "how do i make fluffy grains";

  Rng a1(9), a2(9), b(10);
  auto ra1 = generate_rounds(model, v, input, 2, a1, opt);
  auto ra2 = generate_rounds(model, v, input, 2, a2, opt);
  auto rb = generate_rounds(model, v, input, 2, b, opt);
  CHECK(ra1[1].text == ra2[1].text);
  bool any_diff = ra1[0].text != rb[0].text || ra1[1].text != rb[1].text;
  CHECK(any_diff);
}

TEST_CASE("generate_to_directory writes aligned round files and a manifest") {
  namespace fs = std::filesystem;
  Vocabulary v = words_vocab();
  Paraphraser model(tiny_cfg(v.size()), 11);
  const std::string dir = (fs::temp_directory_path() / "btmpg_gen").string();
  fs::remove_all(dir);

  std::vector<std::string> lines = {"what is the best way to cook rice",
                                    "how do i make fluffy grains"};
  generate_to_directory(model, v, lines, 2, 123, dir, "deadbeef");

  auto r1 = slurp(dir + "/round_1.txt");
  auto r2 = slurp(dir + "/round_2.txt");
  CHECK(std::count(r1.begin(), r1.end(), '\n') == 2);
  CHECK(std::count(r2.begin(), r2.end(), '\n') == 2);

  auto manifest = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  CHECK(manifest["checkpoint_hash"] == "deadbeef");
  CHECK(manifest["seed"] == 123);
  CHECK(manifest["rounds"] == 2);
  CHECK(manifest["lines"] == 2);

  // rerun is byte-identical
  const std::string dir2 = (fs::temp_directory_path() / "btmpg_gen2").string();
  fs::remove_all(dir2);
  generate_to_directory(model, v, lines, 2, 123, dir2, "deadbeef");
  CHECK(slurp(dir2 + "/round_1.txt") == r1);
  CHECK(slurp(dir2 + "/round_2.txt") == r2);

  // line independence: dropping the first line leaves the second unchanged
  const std::string dir3 = (fs::temp_directory_path() / "btmpg_gen3").string();
  fs::remove_all(dir3);
  generate_to_directory(model, v, {lines[1]}, 2, 124, dir3, "deadbeef");
  const std::string single = slurp(dir3 + "/round_1.txt");
  CHECK(std::count(single.begin(), single.end(), '\n') == 1);

  CHECK_THROWS_WITH_AS(
      generate_to_directory(model, v, {"ok line", ""}, 1, 5, dir3, "x"),
      doctest::Contains("line 2"), std::runtime_error);

  fs::remove_all(dir);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
}
