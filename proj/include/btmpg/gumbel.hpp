#pragma once

#include <Eigen/Core>

#include "btmpg/autodiff.hpp"
#include "btmpg/cvae.hpp"
#include "btmpg/rng.hpp"

namespace btmpg {

// A relaxed sentence: one distribution over the vocabulary per position.
struct SoftSequence {
  ad::Var rows;    // [L × V], each row on the simplex
  int length = 0;
};

// Matrix of independent Gumbel(0,1) draws.
Eigen::MatrixXd gumbel_noise(int rows, int cols, Rng& rng);

// Rowwise softmax((log(p + 1e-20) + g) / tau). Differentiable in p; g is a
// constant. With g = 0 and tau = 1 this is the identity on distributions.
ad::Var gumbel_softmax(ad::Var p, const Eigen::MatrixXd& g, double tau);

// rows · W_e: each output row is the distribution-weighted average of
// embedding rows. A one-hot row reproduces the plain lookup.
ad::Var soft_embed(ad::Var soft_rows, ad::Var w_e);

// Exponential annealing. The default direction takes tau from 1 down to
// 1/tau_max over training; the increasing switch runs it up to tau_max
// instead.
struct TemperatureSchedule {
  double tau_max = 5.0;
  int total_epochs = 1;
  bool increasing = false;
};
double temperature(int epoch, const TemperatureSchedule& schedule);

struct SoftDecodeOptions {
  int max_len = 21;
  double tau = 1.0;
  bool stop_at_eos = true;  // stop once a row's argmax is EOS
  int eos_id = 3;
  int bos_id = 2;
};

// Autoregressive decoding without sampling: each step's mixed output
// distribution is relaxed by gumbel_softmax, appended to the result, and
// soft-embedded as the next decoder input. Gradients flow through the
// whole chain; freezing noise_rng's seed makes the map
// parameters -> output smooth and finite-difference checkable.
SoftSequence autoregressive_soft_decode(ad::Tape& t, const Paraphraser& model,
                                        ad::Var z, const EncoderOutput& enc,
                                        const SourceRef& src, Rng& noise_rng,
                                        const SoftDecodeOptions& opt);

}  // namespace btmpg
