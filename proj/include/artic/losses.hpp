#pragma once

#include <vector>

#include "artic/tape.hpp"
#include "artic/tensor.hpp"

namespace artic::losses {

using diff::Tape;
using diff::Tensor;
using diff::Var;

// Fixed per-task weights for the hand-tuned multi-task combiner.
struct LossWeights {
  double alpha_ctc = 1.0;
  double alpha_mae = 1.0;
};

// Learnable log-variances for the uncertainty-based combiner. s = log(sigma^2),
// so sigma^2 = exp(s) stays positive without any constraint on s itself.
struct UncertaintyParams {
  double s_ctc = 0.0;
  double s_mae = 0.0;
};

// What a single combined-loss evaluation actually applied, for trace output.
struct LossBreakdown {
  double l_ctc = 0.0;
  double l_mae = 0.0;
  double l_total = 0.0;
  double w_ctc = 0.0;  // effective multiplier on l_ctc
  double w_mae = 0.0;  // effective multiplier on l_mae
};

// Numeric CTC forward-backward. `logp` is a row-major T x C matrix of
// normalized log-probabilities, C = vocab + 1 with `blank` one of the columns.
// Returns -log P(target); if `grad` is non-null it is resized to T*C and
// filled with d(-log P)/d(logp).
double ctc_forward_backward(const double* logp, int T, int C,
                            const std::vector<int>& target, int blank,
                            std::vector<double>* grad);

// Tape-level CTC loss; gradient flows into `log_probs`.
Var ctc_loss(Tape& t, Var log_probs, const std::vector<int>& target, int blank);

// Exhaustive path-enumeration oracle: sums the probability of every frame-level
// path that collapses to `target`. Only viable for C^T <= 1e6.
double ctc_brute_force(const Tensor& log_probs, const std::vector<int>& target, int blank);

// Mean absolute error over valid frames x channels; masked frames are excluded
// from both the numerator and the denominator.
Var mae_loss(Tape& t, Var tv_pred, Var tv_target, const std::vector<bool>& frame_mask);

// alpha_ctc * l_ctc + alpha_mae * l_mae with fixed weights.
Var combine_static(Tape& t, Var l_ctc, Var l_mae, const LossWeights& w);

// exp(-s_ctc) * l_ctc + 0.5 * exp(-s_mae) * l_mae + 0.5 * s_ctc + 0.5 * s_mae,
// with s_ctc / s_mae scalar variables (learnable leaves in training).
Var combine_ubw(Tape& t, Var l_ctc, Var l_mae, Var s_ctc, Var s_mae);

// Plain-number evaluations of the same formulas, for logging and tests.
LossBreakdown combine_static_value(double l_ctc, double l_mae, const LossWeights& w);
LossBreakdown combine_ubw_value(double l_ctc, double l_mae, const UncertaintyParams& u);

}  // namespace artic::losses
