#include "btmpg/cvae.hpp"

#include <cmath>
#include <stdexcept>

namespace btmpg {

using ad::Mat;
using ad::Var;

void ParaphraserConfig::validate() const {
  if (d_e < 1 || d_h < 1 || d_z < 1 || layers < 1 || vocab_size < 1)
    throw std::invalid_argument("paraphraser config: all dims must be positive");
  if (d_z > d_h)
    throw std::invalid_argument("paraphraser config: d_z must not exceed d_h");
}

namespace {

void fill_xavier(ad::Param& p, Rng& rng) {
  const double a = std::sqrt(6.0 / (p.rows() + p.cols()));
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) p.value(r, c) = rng.uniform(-a, a);
}

// One recurrence step. pre = x·Wx + h·Wh + b, gates ordered i, f, g, o in
// the 4h columns.
std::pair<Var, Var> lstm_step(ad::Tape& t, Var x, Var h, Var c, Var wx, Var wh, Var b) {
  const int dh = static_cast<int>(wh.val().rows());
  Var pre = ad::add(ad::affine(x, wx, b), ad::matmul(h, wh));
  Var i = ad::sigmoid(ad::slice_cols(pre, 0, dh));
  Var f = ad::sigmoid(ad::slice_cols(pre, dh, dh));
  Var g = ad::tanh_(ad::slice_cols(pre, 2 * dh, dh));
  Var o = ad::sigmoid(ad::slice_cols(pre, 3 * dh, dh));
  Var c_next = ad::add(ad::cmul(f, c), ad::cmul(i, g));
  Var h_next = ad::cmul(o, ad::tanh_(c_next));
  return {h_next, c_next};
}

}  // namespace

Paraphraser::Paraphraser(const ParaphraserConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int de = cfg_.d_e, dh = cfg_.d_h, dz = cfg_.d_z, v = cfg_.vocab_size;

  auto weight = [&](const std::string& name, int r, int c) {
    ad::Param& p = params_.add(name, r, c);
    fill_xavier(p, rng);
    return &p;
  };
  auto bias = [&](const std::string& name, int c) { return &params_.add(name, 1, c); };
  auto lstm_layer = [&](const std::string& prefix, int in) {
    LayerRefs l;
    l.wx = weight(prefix + ".wx", in, 4 * dh);
    l.wh = weight(prefix + ".wh", dh, 4 * dh);
    l.b = bias(prefix + ".b", 4 * dh);
    l.b->value.block(0, dh, 1, dh).setOnes();  // forget gate opens at init
    return l;
  };

  embed_ = weight("para.embed", v, de);
  for (int l = 0; l < cfg_.layers; ++l)
    enc_layers_.push_back(lstm_layer("para.enc.l" + std::to_string(l), l == 0 ? de : dh));
  for (int l = 0; l < cfg_.layers; ++l)
    dec_layers_.push_back(
        lstm_layer("para.dec.l" + std::to_string(l), l == 0 ? de + dz : dh));
  for (int l = 0; l < cfg_.layers; ++l) {
    InitRefs ir;
    ir.w = weight("para.dec.l" + std::to_string(l) + ".init_w", dh, dh);
    ir.b = bias("para.dec.l" + std::to_string(l) + ".init_b", dh);
    dec_init_.push_back(ir);
  }
  mu_w_ = weight("para.post.mu_w", dh, dz);
  mu_b_ = bias("para.post.mu_b", dz);
  ls_w_ = weight("para.post.ls_w", dh, dz);
  ls_b_ = bias("para.post.ls_b", dz);
  out_w_ = weight("para.out.w", 2 * dh, v);
  out_b_ = bias("para.out.b", v);
  gate_wh_ = weight("para.gate.wh", 2 * dh, 1);
  gate_ws_ = weight("para.gate.ws", de + dz, 1);
  gate_b_ = bias("para.gate.b", 1);
}

Var Paraphraser::embedding_var(ad::Tape& t) const { return t.param(*embed_); }

Var Paraphraser::embed_hard(ad::Tape& t, const std::vector<int>& ids) const {
  return ad::rows_lookup(embedding_var(t), ids);
}

Var Paraphraser::embed_soft(ad::Tape& t, Var soft_rows) const {
  return ad::matmul(soft_rows, embedding_var(t));
}

LstmState Paraphraser::zero_state(ad::Tape& t) const {
  LstmState s;
  for (int l = 0; l < cfg_.layers; ++l) {
    s.h.push_back(t.input(Mat::Zero(1, cfg_.d_h)));
    s.c.push_back(t.input(Mat::Zero(1, cfg_.d_h)));
  }
  return s;
}

EncoderOutput Paraphraser::run_encoder(ad::Tape& t, Var embedded,
                                       const LstmState& init) const {
  const int len = embedded.rows();
  if (len == 0) throw std::invalid_argument("encode: empty sequence");
  LstmState state = init;
  std::vector<Var> wx(cfg_.layers), wh(cfg_.layers), b(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    wx[l] = t.param(*enc_layers_[l].wx);
    wh[l] = t.param(*enc_layers_[l].wh);
    b[l] = t.param(*enc_layers_[l].b);
  }
  std::vector<Var> top;
  top.reserve(len);
  for (int pos = 0; pos < len; ++pos) {
    Var x = ad::slice_rows(embedded, pos, 1);
    for (int l = 0; l < cfg_.layers; ++l) {
      auto [h, c] = lstm_step(t, x, state.h[l], state.c[l], wx[l], wh[l], b[l]);
      state.h[l] = h;
      state.c[l] = c;
      x = h;
    }
    top.push_back(x);
  }
  EncoderOutput out;
  out.o_s = ad::concat_rows(top);
  out.h_s = state.h.back();
  out.length = len;
  return out;
}

EncoderOutput Paraphraser::encode_source(ad::Tape& t, const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("encode_source: empty sequence");
  return run_encoder(t, embed_hard(t, ids), zero_state(t));
}

EncoderOutput Paraphraser::encode_source_soft(ad::Tape& t, Var soft_rows) const {
  if (soft_rows.rows() == 0) throw std::invalid_argument("encode_source: empty sequence");
  return run_encoder(t, embed_soft(t, soft_rows), zero_state(t));
}

EncoderOutput Paraphraser::encode_source_ref(ad::Tape& t, const SourceRef& src) const {
  return src.soft ? encode_source_soft(t, src.soft_rows) : encode_source(t, src.ids);
}

LatentPosterior Paraphraser::encode_posterior(ad::Tape& t,
                                              const std::vector<int>& target_ids,
                                              const EncoderOutput& enc) const {
  if (target_ids.empty()) throw std::invalid_argument("encode_posterior: empty target");
  LstmState init;
  for (int l = 0; l < cfg_.layers; ++l) {
    init.h.push_back(enc.h_s);  // conditioning enters through the start state
    init.c.push_back(t.input(Mat::Zero(1, cfg_.d_h)));
  }
  EncoderOutput tgt = run_encoder(t, embed_hard(t, target_ids), init);
  LatentPosterior post;
  post.mu = ad::affine(tgt.h_s, t.param(*mu_w_), t.param(*mu_b_));
  post.log_sigma2 =
      ad::clamp(ad::affine(tgt.h_s, t.param(*ls_w_), t.param(*ls_b_)), -10.0, 10.0);
  post.sigma2 = ad::exp_(post.log_sigma2);
  return post;
}

Var Paraphraser::sample_latent(ad::Tape& t, const LatentPosterior& post,
                               const Eigen::RowVectorXd& eps) const {
  Var std_dev = ad::exp_(ad::scale(post.log_sigma2, 0.5));
  return ad::add(post.mu, ad::cmul(std_dev, t.input(eps)));
}

LstmState Paraphraser::initial_decoder_state(ad::Tape& t, const EncoderOutput& enc) const {
  LstmState s;
  for (int l = 0; l < cfg_.layers; ++l) {
    s.h.push_back(
        ad::tanh_(ad::affine(enc.h_s, t.param(*dec_init_[l].w), t.param(*dec_init_[l].b))));
    s.c.push_back(t.input(Mat::Zero(1, cfg_.d_h)));
  }
  return s;
}

std::pair<Var, Var> Paraphraser::attend(ad::Tape& t, Var o_d, Var o_s) const {
  Var p_a = ad::softmax_rows(ad::matmul_nt(o_d, o_s));
  Var v_a = ad::matmul(p_a, o_s);
  return {p_a, v_a};
}

std::pair<DecoderStepOutput, LstmState> Paraphraser::decode_step(
    ad::Tape& t, Var e_d, Var z, const LstmState& state, const EncoderOutput& enc,
    const SourceRef& src) const {
  Var x = ad::concat_cols({e_d, z});
  LstmState next = state;
  Var layer_in = x;
  for (int l = 0; l < cfg_.layers; ++l) {
    auto [h, c] = lstm_step(t, layer_in, state.h[l], state.c[l],
                            t.param(*dec_layers_[l].wx), t.param(*dec_layers_[l].wh),
                            t.param(*dec_layers_[l].b));
    next.h[l] = h;
    next.c[l] = c;
    layer_in = h;
  }
  Var o_d = next.h.back();

  DecoderStepOutput out;
  auto [p_a, v_a] = attend(t, o_d, enc.o_s);
  out.p_a = p_a;
  out.v_a = v_a;

  Var hh = ad::concat_cols({o_d, v_a});
  out.p_d = ad::softmax_rows(ad::affine(hh, t.param(*out_w_), t.param(*out_b_)));
  out.eta = ad::sigmoid(ad::add(ad::add(ad::matmul(hh, t.param(*gate_wh_)),
                                        ad::matmul(x, t.param(*gate_ws_))),
                                t.param(*gate_b_)));

  Var p_copy = src.soft ? ad::matmul(out.p_a, src.soft_rows)
                        : ad::copy_scatter(out.p_a, src.ids, cfg_.vocab_size);
  Var keep = ad::sub(t.input(Mat::Ones(1, 1)), out.eta);
  out.p = ad::add(ad::cmul_colvec(out.p_d, out.eta), ad::cmul_colvec(p_copy, keep));
  return {out, next};
}

std::vector<DecoderStepOutput> Paraphraser::decode_teacher_forced(
    ad::Tape& t, const std::vector<int>& framed_target, Var z, const EncoderOutput& enc,
    const SourceRef& src) const {
  if (framed_target.size() < 2)
    throw std::invalid_argument("decode_teacher_forced: target needs BOS and EOS");
  LstmState state = initial_decoder_state(t, enc);
  std::vector<DecoderStepOutput> steps;
  steps.reserve(framed_target.size() - 1);
  for (std::size_t i = 0; i + 1 < framed_target.size(); ++i) {
    Var e_d = embed_hard(t, {framed_target[i]});
    auto [out, next] = decode_step(t, e_d, z, state, enc, src);
    steps.push_back(out);
    state = next;
  }
  return steps;
}

Var kl_loss(ad::Tape& t, const LatentPosterior& post) {
  Var ones = t.input(Mat::Ones(1, post.mu.cols()));
  Var inner = ad::sub(ad::sub(ad::add(ones, post.log_sigma2), ad::cmul(post.mu, post.mu)),
                      post.sigma2);
  return ad::scale(ad::sum_all(inner), -0.5);
}

double first_word_coefficient(int batch_size, int first_word_count) {
  if (first_word_count < 1 || first_word_count > batch_size)
    throw std::invalid_argument("first_word_coefficient: count out of range");
  return 1.0 + std::log(static_cast<double>(batch_size) / first_word_count);
}

ParaphraseLoss paraphrase_loss(ad::Tape& t, const std::vector<DecoderStepOutput>& steps,
                               const std::vector<int>& framed_target,
                               const LatentPosterior& post, double first_word_coeff,
                               bool first_word_additive, double kl_weight) {
  if (steps.size() + 1 != framed_target.size())
    throw std::invalid_argument("paraphrase_loss: step count must match target length");
  std::vector<Var> terms;
  terms.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int want = framed_target[i + 1];
    Var nll = ad::scale(ad::log_(ad::add_scalar(ad::entry(steps[i].p, 0, want), 1e-20)),
                        -1.0);
    if (i == 0) {
      // Boost the opening-token loss: scaled outright by default, or the
      // scaled term added on top of the plain one.
      nll = ad::scale(nll, first_word_additive ? 1.0 + first_word_coeff
                                               : first_word_coeff);
    }
    terms.push_back(nll);
  }
  ParaphraseLoss loss;
  loss.ce = ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(terms.size()));
  loss.kl = kl_loss(t, post);
  loss.total = ad::add(loss.ce, ad::scale(loss.kl, kl_weight));
  return loss;
}

}  // namespace btmpg
