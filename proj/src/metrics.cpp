#include "artic/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace artic::metrics {

EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp) {
  int n = static_cast<int>(ref.size());
  int m = static_cast<int>(hyp.size());
  std::vector<int> d(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return d[static_cast<size_t>(i) * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int del = at(i - 1, j) + 1;
      int ins = at(i, j - 1) + 1;
      at(i, j) = std::min({sub, del, ins});
    }
  }

  EditCounts c;
  c.ref_len = n;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      int sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      if (at(i, j) == sub) {  // match or substitution wins ties
        if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {  // deletion before insertion
      ++c.deletions;
      --i;
      continue;
    }
    ++c.insertions;
    --j;
  }
  return c;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double wer(const std::string& ref, const std::string& hyp) {
  std::vector<std::string> r = tokenize_words(ref);
  if (r.empty()) throw std::invalid_argument("wer: empty reference");
  EditCounts c = edit_distance(r, tokenize_words(hyp));
  return static_cast<double>(c.total()) / c.ref_len;
}

namespace {

std::vector<std::string> char_tokens(const std::string& text) {
  std::vector<std::string> out;
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.emplace_back(1, ' ');
      pending_space = false;
    }
    out.emplace_back(1, ch);
  }
  return out;
}

}  // namespace

double cer(const std::string& ref, const std::string& hyp) {
  std::vector<std::string> r = char_tokens(ref);
  if (r.empty()) throw std::invalid_argument("cer: empty reference");
  EditCounts c = edit_distance(r, char_tokens(hyp));
  return static_cast<double>(c.total()) / c.ref_len;
}

double ppmc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("ppmc: series lengths differ (" + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()) + ")");
  }
  size_t n = x.size();
  if (n < 2) throw std::invalid_argument("ppmc: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("ppmc: undefined correlation (zero variance)");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PpmcReport ppmc_report(const Tensor& tv_pred, const Tensor& tv_target,
                       const std::vector<bool>& mask) {
  if (tv_pred.shape != tv_target.shape || tv_pred.shape.size() != 2 ||
      tv_pred.shape[1] != kNumTvs) {
    throw std::invalid_argument("ppmc_report: need equal-shaped T x 9 trajectories");
  }
  int T = tv_pred.shape[0];
  if (static_cast<int>(mask.size()) != T) {
    throw std::invalid_argument("ppmc_report: mask length does not match frame count");
  }
  std::vector<int> valid;
  for (int i = 0; i < T; ++i) {
    if (mask[i]) valid.push_back(i);
  }
  if (valid.size() < 2) throw std::invalid_argument("ppmc_report: need at least 2 valid frames");

  PpmcReport rep;
  double sum = 0.0;
  int defined = 0;
  std::vector<double> x(valid.size()), y(valid.size());
  for (int ch = 0; ch < kNumTvs; ++ch) {
    for (size_t i = 0; i < valid.size(); ++i) {
      x[i] = tv_pred.data[static_cast<size_t>(valid[i]) * kNumTvs + ch];
      y[i] = tv_target.data[static_cast<size_t>(valid[i]) * kNumTvs + ch];
    }
    try {
      double r = ppmc(x, y);
      rep.per_channel[ch] = r;
      sum += r;
      ++defined;
    } catch (const std::invalid_argument&) {
      rep.per_channel[ch] = std::nullopt;
      ++rep.n_undefined;
    }
  }
  if (defined == 0) throw std::invalid_argument("ppmc_report: every channel degenerate");
  rep.mean = sum / defined;
  return rep;
}

}  // namespace artic::metrics
