#include "btmpg/gumbel.hpp"

#include <cmath>
#include <stdexcept>

namespace btmpg {

using ad::Mat;
using ad::Var;

Eigen::MatrixXd gumbel_noise(int rows, int cols, Rng& rng) {
  Mat g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g(r, c) = rng.gumbel();
  return g;
}

Var gumbel_softmax(Var p, const Eigen::MatrixXd& g, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (p.rows() != g.rows() || p.cols() != g.cols())
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  ad::Tape& t = *p.tape;
  Var logits = ad::log_(ad::add_scalar(p, 1e-20));
  Var shifted = ad::add(logits, t.input(g));
  return ad::softmax_rows(ad::scale(shifted, 1.0 / tau));
}

Var soft_embed(Var soft_rows, Var w_e) { return ad::matmul(soft_rows, w_e); }

double temperature(int epoch, const TemperatureSchedule& schedule) {
  if (schedule.total_epochs < 1)
    throw std::invalid_argument("temperature: total_epochs must be >= 1");
  if (epoch < 0 || epoch > schedule.total_epochs)
    throw std::invalid_argument("temperature: epoch out of range");
  const double frac = static_cast<double>(epoch) / schedule.total_epochs;
  return std::pow(schedule.tau_max, schedule.increasing ? frac : -frac);
}

SoftSequence autoregressive_soft_decode(ad::Tape& t, const Paraphraser& model, Var z,
                                        const EncoderOutput& enc, const SourceRef& src,
                                        Rng& noise_rng, const SoftDecodeOptions& opt) {
  if (opt.max_len < 1)
    throw std::invalid_argument("soft_decode: max_len must be >= 1");
  Var w_e = model.embedding_var(t);
  Var e_d = model.embed_hard(t, {opt.bos_id});
  LstmState state = model.initial_decoder_state(t, enc);
  std::vector<Var> rows;
  for (int step = 0; step < opt.max_len; ++step) {
    auto [out, next] = model.decode_step(t, e_d, z, state, enc, src);
    state = next;
    Mat g = gumbel_noise(1, out.p.cols(), noise_rng);
    Var y = gumbel_softmax(out.p, g, opt.tau);
    rows.push_back(y);
    int argmax = 0;
    y.val().row(0).maxCoeff(&argmax);
    if (opt.stop_at_eos && argmax == opt.eos_id) break;
    e_d = soft_embed(y, w_e);
  }
  SoftSequence seq;
  seq.rows = ad::concat_rows(rows);
  seq.length = static_cast<int>(rows.size());
  return seq;
}

}  // namespace btmpg
