#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "artic/tensor.hpp"

namespace artic::decode {

using diff::Tensor;

// Context pad symbol for sentence starts. Never a predictable symbol and
// never allowed inside training transcripts.
inline constexpr char kBoundary = '^';

// Character n-gram model with add-k smoothing. `vocab` holds the predictable
// symbols (graphemes + word separator); the boundary symbol appears only
// inside stored contexts.
struct NGramModel {
  int order = 3;
  double k = 0.5;
  std::vector<char> vocab;                                  // sorted
  std::map<std::string, std::map<char, long long>> counts;  // context -> symbol -> count
  std::map<std::string, long long> context_totals;
};

// Count character n-grams over the corpus with (order-1) boundary pads at the
// start of each transcript.
NGramModel train_ngram(const std::vector<std::string>& corpus, int order, double k);

// log P(symbol | last order-1 characters of context), add-k smoothed.
// Unknown symbols are an error; unseen contexts fall back to uniform 1/|V|.
double lm_logprob(const NGramModel& model, const std::string& context, char symbol);

// Versioned text serialization, sorted so equal models produce identical bytes.
void save_ngram(const NGramModel& model, const std::string& path);
NGramModel load_ngram(const std::string& path);

struct DecodeConfig {
  int beam_width = 16;
  double alpha = 0.5;  // LM weight
  double beta = 1.0;   // length bonus
  int blank = 0;       // blank class index
};

struct BeamHypothesis {
  std::string prefix;
  double p_blank = 0.0;     // log mass of paths ending in blank
  double p_nonblank = 0.0;  // log mass of paths ending in the last symbol
  double lm_score = 0.0;    // accumulated LM log-prob of the prefix
  double score = 0.0;       // logsumexp(p_b, p_nb) + alpha*lm + beta*len
};

// Per-frame argmax, collapse adjacent repeats, drop blanks. Argmax ties break
// toward the lowest class index.
std::vector<int> greedy_decode(const Tensor& log_probs, int blank);

// Map class ids to characters; `alphabet[i]` is the character for class i.
std::string ids_to_text(const std::vector<int>& ids, const std::string& alphabet);

// CTC prefix beam search with optional shallow LM fusion. Ranked best-first;
// equal scores order lexicographically by transcript.
std::vector<BeamHypothesis> beam_search(const Tensor& log_probs, const std::string& alphabet,
                                        const NGramModel* lm, const DecodeConfig& cfg);

// Exact decoder: enumerates every frame path, pools by collapsed transcript,
// applies the same shallow-fusion score. Only for (V+1)^T <= 1e6.
std::pair<std::string, double> exhaustive_oracle(const Tensor& log_probs,
                                                 const std::string& alphabet,
                                                 const NGramModel* lm, const DecodeConfig& cfg);

}  // namespace artic::decode
