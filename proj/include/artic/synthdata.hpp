#pragma once

#include <array>
#include <string>
#include <vector>

#include "artic/rng.hpp"
#include "artic/tensor.hpp"
#include "artic/tv.hpp"

namespace artic::synthdata {

using diff::Tensor;

// Canonical grapheme order = CTC class order; blank sits after these.
const std::string& alphabet();
inline constexpr int kVocabSize = 13;  // 12 letters + word separator

struct Phone {
  char grapheme = '?';
  std::array<double, kNumTvs> tv_target{};  // constriction pose, in [-2, 2]
  int min_duration = 0;                     // 100 Hz frames
  int max_duration = 0;
};

struct PhoneInventory {
  std::vector<Phone> phones;  // one per alphabet symbol, same order
  int space_index = -1;
};

// 12 letter phones plus a neutral word separator. Targets land on a 0.5-step
// grid, pairwise L-inf separation >= 0.5. Deterministic per seed.
PhoneInventory make_inventory(int seed);

struct TvTrajectory {
  int rate_hz = 0;
  Tensor frames;  // T x 9
};

struct Utterance {
  std::string id;
  std::string transcript;   // alphabet graphemes, words joined by spaces
  TvTrajectory tvs_100;
  TvTrajectory tvs_50;
  Tensor features;          // T50 x feature_dim
};

struct CorpusConfig {
  int n_utterances = 0;
  int seed = 1;
  int min_words = 2;
  int max_words = 5;
  double acoustic_noise_sd = 0.1;
  double tv_jitter_sd = 0.05;
  int feature_dim = 20;
  int distractor_dims = 4;   // feature dims independent of the TVs
  int start_index = 0;       // first utterance index in the seed stream
  double noise_scale = 1.0;  // multiplies both noise sds
};

void validate(const CorpusConfig& config);

// Everything the generator derives once per corpus seed: the inventory, a
// 40-word lexicon, and the fixed TV -> acoustics map.
struct CorpusContext {
  PhoneInventory inventory;
  std::vector<std::string> lexicon;
  std::vector<double> mix;    // (feature_dim - distractor_dims) x 9
  std::vector<double> bias;   // per informative dim
  std::vector<double> exc_amp, exc_freq, exc_phase;  // per informative dim
};

CorpusContext make_corpus_context(const CorpusConfig& config);

// One utterance from the given RNG stream: transcript -> piecewise-constant
// 100 Hz TV targets -> Gaussian smoothing (coarticulation) -> jitter ->
// pair-averaged 50 Hz track -> acoustic features.
Utterance synth_utterance(const CorpusContext& ctx, const CorpusConfig& config,
                          int utterance_index, Rng& rng);

// Mean of consecutive frame pairs; an odd trailing frame is dropped.
Tensor downsample_pairs(const Tensor& frames);

struct Corpus {
  CorpusConfig config;
  std::vector<Utterance> utterances;
  std::array<double, kNumTvs> tv_mean{};  // z-scoring stats over raw 100 Hz TVs
  std::array<double, kNumTvs> tv_sd{};
};

// Full corpus: parallel per-utterance generation (utterance seed =
// corpus seed XOR utterance index, so parallel == serial bitwise), then
// corpus-level z-scoring of the TV channels, then one rounding pass through
// 32-bit floats so in-memory values match the on-disk payload exactly.
Corpus generate_corpus(const CorpusConfig& config);

// Manifest (JSON Lines) at <stem>.jsonl, numeric payload at <stem>.artc.
void write_corpus(const Corpus& corpus, const std::string& stem);

struct LoadedCorpus {
  std::vector<Utterance> utterances;
  int feature_dim = 0;
};

LoadedCorpus read_corpus(const std::string& stem);

// Class-id encoding of a transcript (space is a regular class).
std::vector<int> transcript_to_ids(const std::string& transcript);

}  // namespace artic::synthdata
