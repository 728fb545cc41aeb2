#include "artic/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace artic::losses {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

int count_repeats(const std::vector<int>& target) {
  int r = 0;
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++r;
  }
  return r;
}

void check_ctc_inputs(int T, int C, const std::vector<int>& target, int blank) {
  if (T < 1 || C < 2) {
    throw std::invalid_argument("ctc: need at least 1 frame and 2 classes");
  }
  if (blank < 0 || blank >= C) {
    throw std::invalid_argument("ctc: blank index " + std::to_string(blank) + " out of " +
                                std::to_string(C) + " classes");
  }
  for (int y : target) {
    if (y < 0 || y >= C || y == blank) {
      throw std::invalid_argument("ctc: target symbol " + std::to_string(y) +
                                  " invalid (blank or out of range)");
    }
  }
  int L = static_cast<int>(target.size());
  if (T < L + count_repeats(target)) {
    throw std::invalid_argument("target infeasible for " + std::to_string(T) + " frames");
  }
}

}  // namespace

double ctc_forward_backward(const double* logp, int T, int C,
                            const std::vector<int>& target, int blank,
                            std::vector<double>* grad) {
  check_ctc_inputs(T, C, target, blank);
  int L = static_cast<int>(target.size());
  int S = 2 * L + 1;

  // extended label sequence: blank, y1, blank, y2, ..., blank
  std::vector<int> ext(S, blank);
  for (int i = 0; i < L; ++i) ext[2 * i + 1] = target[i];

  auto lp = [&](int t, int s) { return logp[static_cast<size_t>(t) * C + ext[s]]; };

  std::vector<double> alpha(static_cast<size_t>(T) * S, kNegInf);
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double prev = alpha[static_cast<size_t>(t - 1) * S + s];
      if (s >= 1) prev = logsumexp2(prev, alpha[static_cast<size_t>(t - 1) * S + s - 1]);
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) {
        prev = logsumexp2(prev, alpha[static_cast<size_t>(t - 1) * S + s - 2]);
      }
      alpha[static_cast<size_t>(t) * S + s] = (prev == kNegInf) ? kNegInf : prev + lp(t, s);
    }
  }

  double log_p = alpha[static_cast<size_t>(T - 1) * S + S - 1];
  if (S > 1) log_p = logsumexp2(log_p, alpha[static_cast<size_t>(T - 1) * S + S - 2]);
  if (log_p == kNegInf) {
    throw std::invalid_argument("ctc: zero probability for target");
  }

  if (grad != nullptr) {
    std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
    beta[static_cast<size_t>(T - 1) * S + S - 1] = lp(T - 1, S - 1);
    if (S > 1) beta[static_cast<size_t>(T - 1) * S + S - 2] = lp(T - 1, S - 2);
    for (int t = T - 2; t >= 0; --t) {
      for (int s = S - 1; s >= 0; --s) {
        double next = beta[static_cast<size_t>(t + 1) * S + s];
        if (s + 1 < S) next = logsumexp2(next, beta[static_cast<size_t>(t + 1) * S + s + 1]);
        if (s + 2 < S && ext[s + 2] != blank && ext[s + 2] != ext[s]) {
          next = logsumexp2(next, beta[static_cast<size_t>(t + 1) * S + s + 2]);
        }
        beta[static_cast<size_t>(t) * S + s] = (next == kNegInf) ? kNegInf : next + lp(t, s);
      }
    }

    grad->assign(static_cast<size_t>(T) * C, 0.0);
    std::vector<double> occ(C, kNegInf);  // per-class log occupancy at frame t
    for (int t = 0; t < T; ++t) {
      std::fill(occ.begin(), occ.end(), kNegInf);
      for (int s = 0; s < S; ++s) {
        double a = alpha[static_cast<size_t>(t) * S + s];
        double b = beta[static_cast<size_t>(t) * S + s];
        if (a == kNegInf || b == kNegInf) continue;
        // alpha and beta both include logp at (t, s); drop one copy
        occ[ext[s]] = logsumexp2(occ[ext[s]], a + b - lp(t, s));
      }
      for (int k = 0; k < C; ++k) {
        if (occ[k] != kNegInf) {
          (*grad)[static_cast<size_t>(t) * C + k] = -std::exp(occ[k] - log_p);
        }
      }
    }
  }
  return -log_p;
}

namespace {

// Tape node wrapper: forward pass stashes d(loss)/d(logp), backward applies it.
class CtcOp final : public diff::CustomOp {
 public:
  explicit CtcOp(std::vector<double> grad_logp) : grad_logp_(std::move(grad_logp)) {}

  void backward(const Tensor& /*out_value*/, const std::vector<double>& out_grad,
                const std::vector<const Tensor*>& /*parent_values*/,
                const std::vector<std::vector<double>*>& parent_grads) override {
    if (parent_grads[0] == nullptr) return;
    std::vector<double>& pg = *parent_grads[0];
    for (size_t i = 0; i < grad_logp_.size(); ++i) pg[i] += out_grad[0] * grad_logp_[i];
  }

 private:
  std::vector<double> grad_logp_;
};

}  // namespace

Var ctc_loss(Tape& t, Var log_probs, const std::vector<int>& target, int blank) {
  const Tensor& lpv = t.value(log_probs);
  if (lpv.shape.size() != 2) {
    throw std::invalid_argument("ctc_loss: log_probs must be a T x C matrix");
  }
  int T = lpv.shape[0], C = lpv.shape[1];
  std::vector<double> grad;
  double loss = ctc_forward_backward(lpv.data.data(), T, C, target, blank, &grad);
  Tensor out;
  out.shape = {1};
  out.data = {loss};
  return t.custom({log_probs}, std::move(out), std::make_unique<CtcOp>(std::move(grad)));
}

double ctc_brute_force(const Tensor& log_probs, const std::vector<int>& target, int blank) {
  if (log_probs.shape.size() != 2) {
    throw std::invalid_argument("ctc_brute_force: log_probs must be a T x C matrix");
  }
  int T = log_probs.shape[0], C = log_probs.shape[1];
  check_ctc_inputs(T, C, target, blank);
  double n_paths = std::pow(static_cast<double>(C), T);
  if (n_paths > 1e6) {
    throw std::invalid_argument("ctc_brute_force: instance too large (" +
                                std::to_string(static_cast<long long>(n_paths)) + " paths)");
  }

  std::vector<int> path(T, 0);
  std::vector<int> collapsed;
  double log_sum = kNegInf;
  long long total = static_cast<long long>(n_paths);
  for (long long idx = 0; idx < total; ++idx) {
    long long rem = idx;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % C);
      rem /= C;
    }
    collapsed.clear();
    for (int t = 0; t < T; ++t) {
      if (t > 0 && path[t] == path[t - 1]) continue;  // merge repeats first
      if (path[t] == blank) continue;                 // then drop blanks
      collapsed.push_back(path[t]);
    }
    if (collapsed != target) continue;
    double lp = 0.0;
    for (int t = 0; t < T; ++t) lp += log_probs.data[static_cast<size_t>(t) * C + path[t]];
    log_sum = logsumexp2(log_sum, lp);
  }
  if (log_sum == kNegInf) {
    throw std::invalid_argument("ctc_brute_force: zero probability for target");
  }
  return -log_sum;
}

Var mae_loss(Tape& t, Var tv_pred, Var tv_target, const std::vector<bool>& frame_mask) {
  const Tensor& pv = t.value(tv_pred);
  const Tensor& gv = t.value(tv_target);
  if (pv.shape != gv.shape || pv.shape.size() != 2) {
    throw std::invalid_argument("mae_loss: pred and target must be equal-shaped T x K matrices");
  }
  int T = pv.shape[0], K = pv.shape[1];
  if (static_cast<int>(frame_mask.size()) != T) {
    throw std::invalid_argument("mae_loss: mask length " + std::to_string(frame_mask.size()) +
                                " does not match " + std::to_string(T) + " frames");
  }
  int n_valid = static_cast<int>(std::count(frame_mask.begin(), frame_mask.end(), true));
  if (n_valid == 0) {
    throw std::invalid_argument("mae_loss: all frames masked");
  }
  Tensor mask = Tensor::zeros({T, K});
  for (int i = 0; i < T; ++i) {
    if (!frame_mask[i]) continue;
    for (int j = 0; j < K; ++j) mask.data[static_cast<size_t>(i) * K + j] = 1.0;
  }
  Var masked = diff::mul(t, diff::abs_elem(t, diff::sub(t, tv_pred, tv_target)),
                         t.constant(std::move(mask)));
  return diff::scale(t, diff::sum_all(t, masked), 1.0 / (static_cast<double>(n_valid) * K));
}

namespace {

void check_weights(const LossWeights& w) {
  if (!(w.alpha_ctc >= 0.0) || !(w.alpha_mae >= 0.0) || !std::isfinite(w.alpha_ctc) ||
      !std::isfinite(w.alpha_mae) || (w.alpha_ctc == 0.0 && w.alpha_mae == 0.0)) {
    throw std::invalid_argument("combine_static: weights must be finite, >= 0, not both zero");
  }
}

}  // namespace

Var combine_static(Tape& t, Var l_ctc, Var l_mae, const LossWeights& w) {
  check_weights(w);
  return diff::add(t, diff::scale(t, l_ctc, w.alpha_ctc), diff::scale(t, l_mae, w.alpha_mae));
}

Var combine_ubw(Tape& t, Var l_ctc, Var l_mae, Var s_ctc, Var s_mae) {
  if (t.value(l_ctc).size() != 1 || t.value(l_mae).size() != 1 || t.value(s_ctc).size() != 1 ||
      t.value(s_mae).size() != 1) {
    throw std::invalid_argument("combine_ubw: all inputs must be scalars");
  }
  Var weighted_ctc = diff::mul(t, diff::exp_elem(t, diff::scale(t, s_ctc, -1.0)), l_ctc);
  Var weighted_mae =
      diff::scale(t, diff::mul(t, diff::exp_elem(t, diff::scale(t, s_mae, -1.0)), l_mae), 0.5);
  Var reg = diff::add(t, diff::scale(t, s_ctc, 0.5), diff::scale(t, s_mae, 0.5));
  return diff::add(t, diff::add(t, weighted_ctc, weighted_mae), reg);
}

LossBreakdown combine_static_value(double l_ctc, double l_mae, const LossWeights& w) {
  check_weights(w);
  LossBreakdown b;
  b.l_ctc = l_ctc;
  b.l_mae = l_mae;
  b.w_ctc = w.alpha_ctc;
  b.w_mae = w.alpha_mae;
  b.l_total = w.alpha_ctc * l_ctc + w.alpha_mae * l_mae;
  return b;
}

LossBreakdown combine_ubw_value(double l_ctc, double l_mae, const UncertaintyParams& u) {
  LossBreakdown b;
  b.l_ctc = l_ctc;
  b.l_mae = l_mae;
  b.w_ctc = std::exp(-u.s_ctc);
  b.w_mae = 0.5 * std::exp(-u.s_mae);
  b.l_total = b.w_ctc * l_ctc + b.w_mae * l_mae + 0.5 * u.s_ctc + 0.5 * u.s_mae;
  return b;
}

}  // namespace artic::losses
