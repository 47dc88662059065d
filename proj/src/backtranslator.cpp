#include "btmpg/backtranslator.hpp"

#include <cmath>
#include <stdexcept>

namespace btmpg {

using ad::Mat;
using ad::Var;

void BTConfig::validate() const {
  if (layers < 1 || model_dim < 1 || heads < 1 || vocab_size < 1)
    throw std::invalid_argument("bt config: all dims must be positive");
  if (model_dim % heads != 0)
    throw std::invalid_argument("bt config: model_dim must be divisible by heads");
}

namespace {

void fill_xavier(ad::Param& p, Rng& rng) {
  const double a = std::sqrt(6.0 / (p.rows() + p.cols()));
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) p.value(r, c) = rng.uniform(-a, a);
}

Mat sinusoidal_positions(int len, int dim) {
  Mat pe(len, dim);
  for (int pos = 0; pos < len; ++pos) {
    for (int c = 0; c < dim; ++c) {
      const double rate = std::pow(10000.0, double(c - (c % 2)) / dim);
      pe(pos, c) = (c % 2 == 0) ? std::sin(pos / rate) : std::cos(pos / rate);
    }
  }
  return pe;
}

Mat causal_mask(int len) {
  Mat m = Mat::Zero(len, len);
  for (int r = 0; r < len; ++r)
    for (int c = r + 1; c < len; ++c) m(r, c) = -1e30;
  return m;
}

}  // namespace

BackTranslator::BackTranslator(const BTConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int d = cfg_.model_dim, v = cfg_.vocab_size, f = cfg_.ff();

  auto weight = [&](const std::string& name, int r, int c) {
    ad::Param& p = params_.add(name, r, c);
    fill_xavier(p, rng);
    return &p;
  };
  auto bias = [&](const std::string& name, int c) { return &params_.add(name, 1, c); };
  auto mha = [&](const std::string& prefix) {
    Mha m;
    m.wq = weight(prefix + ".wq", d, d);
    m.wk = weight(prefix + ".wk", d, d);
    m.wv = weight(prefix + ".wv", d, d);
    m.wo = weight(prefix + ".wo", d, d);
    return m;
  };
  auto ff = [&](const std::string& prefix) {
    Ff x;
    x.w1 = weight(prefix + ".w1", d, f);
    x.b1 = bias(prefix + ".b1", f);
    x.w2 = weight(prefix + ".w2", f, d);
    x.b2 = bias(prefix + ".b2", d);
    return x;
  };
  auto norm = [&](const std::string& prefix) {
    Norm n;
    n.gain = bias(prefix + ".gain", d);
    n.gain->value.setOnes();
    n.bias = bias(prefix + ".bias", d);
    return n;
  };

  embed_ = weight("bt.embed", v, d);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "bt.enc.l" + std::to_string(l);
    EncLayer e;
    e.n1 = norm(p + ".n1");
    e.self = mha(p + ".self");
    e.n2 = norm(p + ".n2");
    e.ff = ff(p + ".ff");
    enc_.push_back(e);
  }
  enc_final_ = norm("bt.enc.final");
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "bt.dec.l" + std::to_string(l);
    DecLayer dl;
    dl.n1 = norm(p + ".n1");
    dl.self = mha(p + ".self");
    dl.n2 = norm(p + ".n2");
    dl.cross = mha(p + ".cross");
    dl.n3 = norm(p + ".n3");
    dl.ff = ff(p + ".ff");
    dec_.push_back(dl);
  }
  dec_final_ = norm("bt.dec.final");
  out_w_ = weight("bt.out.w", d, v);
  out_b_ = bias("bt.out.b", v);
  gate_w_ = weight("bt.gate.w", 3 * d, 1);
  gate_b_ = bias("bt.gate.b", 1);
}

Var BackTranslator::embed_scaled_ids(ad::Tape& t, const std::vector<int>& ids) const {
  Var e = ad::rows_lookup(t.param(*embed_), ids);
  Var scaled = ad::scale(e, std::sqrt(double(cfg_.model_dim)));
  return ad::add(scaled, t.input(sinusoidal_positions(ids.size(), cfg_.model_dim)));
}

Var BackTranslator::embed_scaled(ad::Tape& t, const SourceRef& src, int* len) const {
  if (src.soft) {
    const int l = src.soft_rows.rows();
    if (l == 0) throw std::invalid_argument("bt forward: empty input");
    *len = l;
    Var e = ad::matmul(src.soft_rows, t.param(*embed_));
    Var scaled = ad::scale(e, std::sqrt(double(cfg_.model_dim)));
    return ad::add(scaled, t.input(sinusoidal_positions(l, cfg_.model_dim)));
  }
  if (src.ids.empty()) throw std::invalid_argument("bt forward: empty input");
  *len = static_cast<int>(src.ids.size());
  return embed_scaled_ids(t, src.ids);
}

Var BackTranslator::norm(ad::Tape& t, const Norm& n, Var x) const {
  return ad::layer_norm(x, t.param(*n.gain), t.param(*n.bias));
}

Var BackTranslator::attention(ad::Tape& t, const Mha& m, Var q_in, Var kv_in,
                              const Mat* mask, Var* attn_avg) const {
  const int dk = cfg_.model_dim / cfg_.heads;
  Var q = ad::matmul(q_in, t.param(*m.wq));
  Var k = ad::matmul(kv_in, t.param(*m.wk));
  Var v = ad::matmul(kv_in, t.param(*m.wv));
  Var mask_v;
  if (mask != nullptr) mask_v = t.input(*mask);
  std::vector<Var> heads, weights;
  for (int h = 0; h < cfg_.heads; ++h) {
    Var qh = ad::slice_cols(q, h * dk, dk);
    Var kh = ad::slice_cols(k, h * dk, dk);
    Var vh = ad::slice_cols(v, h * dk, dk);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(double(dk)));
    if (mask != nullptr) scores = ad::add(scores, mask_v);
    Var attn = ad::softmax_rows(scores);
    if (attn_avg != nullptr) weights.push_back(attn);
    heads.push_back(ad::matmul(attn, vh));
  }
  if (attn_avg != nullptr)
    *attn_avg = ad::scale(ad::add_n(weights), 1.0 / cfg_.heads);
  return ad::matmul(ad::concat_cols(heads), t.param(*m.wo));
}

Var BackTranslator::feed_forward(ad::Tape& t, const Ff& f, Var x) const {
  Var h = ad::relu(ad::affine(x, t.param(*f.w1), t.param(*f.b1)));
  return ad::affine(h, t.param(*f.w2), t.param(*f.b2));
}

Var BackTranslator::forward(ad::Tape& t, const SourceRef& input,
                            const std::vector<int>& framed_target) const {
  if (framed_target.size() < 2)
    throw std::invalid_argument("bt forward: target needs BOS and EOS");

  int src_len = 0;
  Var x = embed_scaled(t, input, &src_len);
  for (const EncLayer& l : enc_) {
    Var nx = norm(t, l.n1, x);
    x = ad::add(x, attention(t, l.self, nx, nx, nullptr, nullptr));
    x = ad::add(x, feed_forward(t, l.ff, norm(t, l.n2, x)));
  }
  Var enc_out = norm(t, enc_final_, x);

  const std::vector<int> dec_ids(framed_target.begin(), framed_target.end() - 1);
  const int m_len = static_cast<int>(dec_ids.size());
  Var dec_in = embed_scaled_ids(t, dec_ids);
  const Mat mask = causal_mask(m_len);
  Var y = dec_in;
  Var p_a;  // final layer's head-averaged cross-attention
  for (std::size_t li = 0; li < dec_.size(); ++li) {
    const DecLayer& l = dec_[li];
    Var q = norm(t, l.n1, y);
    y = ad::add(y, attention(t, l.self, q, q, &mask, nullptr));
    const bool last = li + 1 == dec_.size();
    y = ad::add(y, attention(t, l.cross, norm(t, l.n2, y), enc_out, nullptr,
                             last ? &p_a : nullptr));
    y = ad::add(y, feed_forward(t, l.ff, norm(t, l.n3, y)));
  }
  Var dec_out = norm(t, dec_final_, y);

  Var p_d = ad::softmax_rows(ad::affine(dec_out, t.param(*out_w_), t.param(*out_b_)));
  Var context = ad::matmul(p_a, enc_out);
  Var gate_in = ad::concat_cols({dec_out, context, dec_in});
  Var eta = ad::sigmoid(
      ad::add_rowvec(ad::matmul(gate_in, t.param(*gate_w_)), t.param(*gate_b_)));
  Var p_copy = input.soft ? ad::matmul(p_a, input.soft_rows)
                          : ad::copy_scatter(p_a, input.ids, cfg_.vocab_size);
  Var keep = ad::sub(t.input(Mat::Ones(m_len, 1)), eta);
  return ad::add(ad::cmul_colvec(p_d, eta), ad::cmul_colvec(p_copy, keep));
}

Var sequence_ce(ad::Tape& t, Var step_rows, const std::vector<int>& framed_target) {
  if (static_cast<std::size_t>(step_rows.rows()) + 1 != framed_target.size())
    throw std::invalid_argument("sequence_ce: row count must match target length");
  std::vector<Var> terms;
  terms.reserve(step_rows.rows());
  for (int i = 0; i < step_rows.rows(); ++i)
    terms.push_back(ad::scale(
        ad::log_(ad::add_scalar(ad::entry(step_rows, i, framed_target[i + 1]), 1e-20)),
        -1.0));
  return ad::scale(ad::add_n(terms), 1.0 / double(terms.size()));
}

BtLossParts bt_loss(ad::Tape& t, const BackTranslator& model,
                    const std::vector<SoftSequence>& round_outputs,
                    const std::vector<int>& paraphrase_ids,
                    const std::vector<int>& framed_source, double lambda) {
  BtLossParts parts;
  parts.l_p = sequence_ce(
      t, model.forward(t, SourceRef::hard(paraphrase_ids), framed_source), framed_source);
  parts.total = parts.l_p;
  if (!round_outputs.empty()) {
    std::vector<Var> ls;
    for (const SoftSequence& s : round_outputs) {
      Var l = sequence_ce(t, model.forward(t, SourceRef::from_soft(s.rows), framed_source),
                          framed_source);
      parts.l_s.push_back(l);
      ls.push_back(l);
    }
    parts.total = ad::add(parts.l_p, ad::scale(ad::add_n(ls), lambda));
  }
  return parts;
}

}  // namespace btmpg
