#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "artic/tensor.hpp"
#include "artic/tv.hpp"

namespace artic::metrics {

using diff::Tensor;

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_len = 0;

  int total() const { return substitutions + deletions + insertions; }
};

// Levenshtein with unit costs; among minimal-cost alignments the backtrace
// prefers substitution over deletion over insertion, so counts are unique.
EditCounts edit_distance(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp);

// Split on runs of whitespace.
std::vector<std::string> tokenize_words(const std::string& text);

// (S + D + I) / ref_len over whitespace-tokenized words; a fraction, not a
// percent. Can exceed 1 when hypotheses carry many insertions.
double wer(const std::string& ref, const std::string& hyp);

// Character-level rate with whitespace runs collapsed to single spaces.
double cer(const std::string& ref, const std::string& hyp);

// Pearson product-moment correlation, clamped to [-1, 1] against rounding.
// Zero variance in either series is an error ("undefined correlation").
double ppmc(const std::vector<double>& x, const std::vector<double>& y);

struct PpmcReport {
  std::array<std::optional<double>, kNumTvs> per_channel;  // nullopt = undefined
  double mean = 0.0;        // over defined channels only
  int n_undefined = 0;      // degenerate channels excluded from the mean
};

// Channel-wise correlation over valid frames of two T x 9 trajectories.
PpmcReport ppmc_report(const Tensor& tv_pred, const Tensor& tv_target,
                       const std::vector<bool>& mask);

}  // namespace artic::metrics
