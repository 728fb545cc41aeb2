#include "artic/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace artic::synthdata {

namespace {

using nlohmann::json;

constexpr uint32_t kSidecarVersion = 1;
constexpr char kMagic[4] = {'A', 'R', 'T', 'C'};
constexpr int kLexiconSize = 40;
constexpr double kSmoothSd = 3.0;  // coarticulation kernel, 100 Hz frames
constexpr int kPeriodicityChannel = 7;

int count_repeats(const std::vector<int>& ids) {
  int r = 0;
  for (size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1]) ++r;
  }
  return r;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_tensor_f32(Tensor& t) {
  for (double& v : t.data) v = round_f32(v);
}

}  // namespace

const std::string& alphabet() {
  static const std::string chars = "abcdefghijkl ";
  return chars;
}

std::vector<int> transcript_to_ids(const std::string& transcript) {
  std::vector<int> ids;
  ids.reserve(transcript.size());
  for (char ch : transcript) {
    size_t pos = alphabet().find(ch);
    if (pos == std::string::npos) {
      throw std::invalid_argument(std::string("transcript_to_ids: character '") + ch +
                                  "' is not in the grapheme inventory");
    }
    ids.push_back(static_cast<int>(pos));
  }
  return ids;
}

PhoneInventory make_inventory(int seed) {
  Rng rng(static_cast<uint64_t>(seed));
  PhoneInventory inv;
  const std::string& chars = alphabet();
  std::vector<std::array<double, kNumTvs>> taken;
  taken.push_back({});  // the separator's neutral all-zero pose is reserved

  for (char ch : chars) {
    Phone p;
    p.grapheme = ch;
    if (ch == ' ') {
      p.tv_target.fill(0.0);
      p.min_duration = 4;
      p.max_duration = 8;
      inv.space_index = static_cast<int>(inv.phones.size());
    } else {
      // grid draw: 0.5 steps over [-2, 2]; any two distinct grid poses are
      // automatically separated by >= 0.5 in L-inf
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1000) {
          throw std::runtime_error("make_inventory: could not place separated targets");
        }
        std::array<double, kNumTvs> cand{};
        for (int k = 0; k < kNumTvs; ++k) cand[k] = -2.0 + 0.5 * rng.uniform_int(0, 8);
        bool clash = false;
        for (const auto& other : taken) {
          double linf = 0.0;
          for (int k = 0; k < kNumTvs; ++k) linf = std::max(linf, std::fabs(cand[k] - other[k]));
          if (linf < 0.5) {
            clash = true;
            break;
          }
        }
        if (!clash) {
          p.tv_target = cand;
          taken.push_back(cand);
          break;
        }
      }
      p.min_duration = 6;
      p.max_duration = 12;
    }
    inv.phones.push_back(p);
  }
  return inv;
}

void validate(const CorpusConfig& c) {
  if (c.n_utterances < 1) throw std::invalid_argument("n_utterances must be >= 1");
  if (c.min_words < 1) throw std::invalid_argument("min_words must be >= 1");
  if (c.max_words < c.min_words) throw std::invalid_argument("max_words must be >= min_words");
  if (c.distractor_dims < 0) throw std::invalid_argument("distractor_dims must be >= 0");
  if (c.feature_dim <= c.distractor_dims) {
    throw std::invalid_argument("feature_dim must exceed distractor_dims");
  }
  if (c.acoustic_noise_sd < 0.0 || c.tv_jitter_sd < 0.0 || c.noise_scale < 0.0) {
    throw std::invalid_argument("noise magnitudes must be >= 0");
  }
  if (c.start_index < 0) throw std::invalid_argument("start_index must be >= 0");
}

CorpusContext make_corpus_context(const CorpusConfig& config) {
  validate(config);
  CorpusContext ctx;
  ctx.inventory = make_inventory(config.seed);

  // 40 unique words of 2-6 letters; id order doubles as the Zipf rank
  Rng lex_rng(derive_seed(static_cast<uint64_t>(config.seed), 1));
  std::set<std::string> seen;
  while (static_cast<int>(ctx.lexicon.size()) < kLexiconSize) {
    int len = lex_rng.uniform_int(2, 6);
    std::string w;
    for (int i = 0; i < len; ++i) {
      w.push_back(alphabet()[static_cast<size_t>(lex_rng.uniform_int(0, kVocabSize - 2))]);
    }
    if (seen.insert(w).second) ctx.lexicon.push_back(w);
  }

  Rng map_rng(derive_seed(static_cast<uint64_t>(config.seed), 2));
  int informative = config.feature_dim - config.distractor_dims;
  ctx.mix.resize(static_cast<size_t>(informative) * kNumTvs);
  for (double& v : ctx.mix) v = map_rng.uniform(-0.6, 0.6);
  ctx.bias.resize(informative);
  for (double& v : ctx.bias) v = map_rng.uniform(-0.3, 0.3);
  ctx.exc_amp.resize(informative);
  ctx.exc_freq.resize(informative);
  ctx.exc_phase.resize(informative);
  for (int j = 0; j < informative; ++j) {
    ctx.exc_amp[j] = map_rng.uniform(0.2, 0.5);
    ctx.exc_freq[j] = map_rng.uniform(0.2, 1.5);
    ctx.exc_phase[j] = map_rng.uniform(0.0, 2.0 * M_PI);
  }
  return ctx;
}

Tensor downsample_pairs(const Tensor& frames) {
  if (frames.shape.size() != 2) {
    throw std::invalid_argument("downsample_pairs: need a T x K matrix");
  }
  int T = frames.shape[0], K = frames.shape[1];
  int half = T / 2;
  if (half < 1) throw std::invalid_argument("downsample_pairs: need at least 2 frames");
  Tensor out = Tensor::zeros({half, K});
  for (int i = 0; i < half; ++i) {
    for (int j = 0; j < K; ++j) {
      out.data[static_cast<size_t>(i) * K + j] =
          0.5 * (frames.data[static_cast<size_t>(2 * i) * K + j] +
                 frames.data[static_cast<size_t>(2 * i + 1) * K + j]);
    }
  }
  return out;
}

namespace {

// Truncated Gaussian smoothing along time, per channel, with edge
// renormalization so boundary frames keep unit total weight.
Tensor smooth_columns(const Tensor& x, double sd) {
  int T = x.shape[0], K = x.shape[1];
  int radius = static_cast<int>(std::ceil(3.0 * sd));
  std::vector<double> kernel(2 * radius + 1);
  for (int d = -radius; d <= radius; ++d) {
    kernel[d + radius] = std::exp(-0.5 * d * d / (sd * sd));
  }
  Tensor out = Tensor::zeros({T, K});
  for (int t = 0; t < T; ++t) {
    int lo = std::max(0, t - radius);
    int hi = std::min(T - 1, t + radius);
    double wsum = 0.0;
    for (int s = lo; s <= hi; ++s) wsum += kernel[s - t + radius];
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int s = lo; s <= hi; ++s) {
        acc += kernel[s - t + radius] * x.data[static_cast<size_t>(s) * K + k];
      }
      out.data[static_cast<size_t>(t) * K + k] = acc / wsum;
    }
  }
  return out;
}

std::string sample_transcript(const CorpusContext& ctx, const CorpusConfig& cfg, Rng& rng) {
  // Zipf-weighted draw over the lexicon: weight of rank r is 1/(r+1)
  static thread_local std::vector<double> cum;
  cum.assign(ctx.lexicon.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < ctx.lexicon.size(); ++i) {
    total += 1.0 / static_cast<double>(i + 1);
    cum[i] = total;
  }
  int n_words = rng.uniform_int(cfg.min_words, cfg.max_words);
  std::string transcript;
  for (int w = 0; w < n_words; ++w) {
    double u = rng.uniform() * total;
    size_t idx = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (idx >= ctx.lexicon.size()) idx = ctx.lexicon.size() - 1;
    if (w > 0) transcript.push_back(' ');
    transcript += ctx.lexicon[idx];
  }
  return transcript;
}

}  // namespace

Utterance synth_utterance(const CorpusContext& ctx, const CorpusConfig& config,
                          int utterance_index, Rng& rng) {
  Utterance utt;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "utt%06d", utterance_index);
    utt.id = buf;
  }
  utt.transcript = sample_transcript(ctx, config, rng);
  std::vector<int> ids = transcript_to_ids(utt.transcript);
  int needed = static_cast<int>(ids.size()) + count_repeats(ids);

  // per-grapheme durations; re-sample if the 50 Hz length cannot carry the
  // CTC target (cannot happen with the stock inventory, but custom ranges may)
  std::vector<int> durations(ids.size());
  int t100 = 0;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) {
      throw std::runtime_error("synth_utterance: no feasible durations for '" + utt.transcript +
                               "'");
    }
    t100 = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      const Phone& p = ctx.inventory.phones[static_cast<size_t>(ids[i])];
      durations[i] = rng.uniform_int(p.min_duration, p.max_duration);
      t100 += durations[i];
    }
    if (t100 / 2 >= needed) break;
  }

  Tensor targets = Tensor::zeros({t100, kNumTvs});
  int frame = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    const Phone& p = ctx.inventory.phones[static_cast<size_t>(ids[i])];
    for (int d = 0; d < durations[i]; ++d, ++frame) {
      for (int k = 0; k < kNumTvs; ++k) {
        targets.data[static_cast<size_t>(frame) * kNumTvs + k] = p.tv_target[k];
      }
    }
  }

  Tensor tvs = smooth_columns(targets, kSmoothSd);
  double jitter_sd = config.tv_jitter_sd * config.noise_scale;
  for (int t = 0; t < t100; ++t) {
    for (int k = 0; k < kNumTvs; ++k) {
      tvs.data[static_cast<size_t>(t) * kNumTvs + k] += jitter_sd * rng.normal();
    }
  }

  Tensor tvs50 = downsample_pairs(tvs);
  int t50 = tvs50.shape[0];
  int informative = config.feature_dim - config.distractor_dims;
  double noise_sd = config.acoustic_noise_sd * config.noise_scale;
  Tensor feats = Tensor::zeros({t50, config.feature_dim});
  for (int t = 0; t < t50; ++t) {
    const double* tv = tvs50.data.data() + static_cast<size_t>(t) * kNumTvs;
    double* row = feats.data.data() + static_cast<size_t>(t) * config.feature_dim;
    for (int j = 0; j < informative; ++j) {
      double lin = ctx.bias[j];
      for (int k = 0; k < kNumTvs; ++k) lin += ctx.mix[static_cast<size_t>(j) * kNumTvs + k] * tv[k];
      double excitation =
          ctx.exc_amp[j] * std::sin(ctx.exc_freq[j] * t + ctx.exc_phase[j]) * tv[kPeriodicityChannel];
      row[j] = std::tanh(lin) + excitation + noise_sd * rng.normal();
    }
    for (int j = informative; j < config.feature_dim; ++j) {
      row[j] = rng.normal();  // distractor: pure noise, independent of the TVs
    }
  }

  utt.tvs_100 = TvTrajectory{100, std::move(tvs)};
  utt.tvs_50 = TvTrajectory{50, std::move(tvs50)};
  utt.features = std::move(feats);
  return utt;
}

Corpus generate_corpus(const CorpusConfig& config) {
  validate(config);
  CorpusContext ctx = make_corpus_context(config);
  Corpus corpus;
  corpus.config = config;
  corpus.utterances.resize(static_cast<size_t>(config.n_utterances));

#pragma omp parallel for schedule(static)
  for (int i = 0; i < config.n_utterances; ++i) {
    int global_index = config.start_index + i;
    Rng rng(derive_seed(static_cast<uint64_t>(config.seed),
                        0x100000000ULL + static_cast<uint64_t>(global_index)) ^
            static_cast<uint64_t>(global_index));
    corpus.utterances[static_cast<size_t>(i)] =
        synth_utterance(ctx, config, global_index, rng);
  }

  // corpus-level z-scoring of the raw 100 Hz TVs; the 50 Hz track is then
  // re-derived from the normalized frames so the alignment contract holds
  std::array<double, kNumTvs> sum{}, sumsq{};
  long long n_frames = 0;
  for (const Utterance& u : corpus.utterances) {
    int T = u.tvs_100.frames.shape[0];
    n_frames += T;
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < kNumTvs; ++k) {
        double v = u.tvs_100.frames.data[static_cast<size_t>(t) * kNumTvs + k];
        sum[k] += v;
        sumsq[k] += v * v;
      }
    }
  }
  for (int k = 0; k < kNumTvs; ++k) {
    corpus.tv_mean[k] = sum[k] / static_cast<double>(n_frames);
    double var = sumsq[k] / static_cast<double>(n_frames) - corpus.tv_mean[k] * corpus.tv_mean[k];
    if (var < 1e-12) {
      throw std::runtime_error(std::string("generate_corpus: degenerate TV channel ") +
                               kTvChannelNames[static_cast<size_t>(k)]);
    }
    corpus.tv_sd[k] = std::sqrt(var);
  }

#pragma omp parallel for schedule(static)
  for (int i = 0; i < config.n_utterances; ++i) {
    Utterance& u = corpus.utterances[static_cast<size_t>(i)];
    Tensor& f100 = u.tvs_100.frames;
    for (int t = 0; t < f100.shape[0]; ++t) {
      for (int k = 0; k < kNumTvs; ++k) {
        double& v = f100.data[static_cast<size_t>(t) * kNumTvs + k];
        v = (v - corpus.tv_mean[k]) / corpus.tv_sd[k];
      }
    }
    u.tvs_50.frames = downsample_pairs(f100);
    round_tensor_f32(u.tvs_100.frames);
    round_tensor_f32(u.tvs_50.frames);
    round_tensor_f32(u.features);
  }
  return corpus;
}

namespace {

void append_f32(std::ofstream& out, const Tensor& t) {
  for (double v : t.data) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

size_t tensor_bytes(const Tensor& t) { return t.data.size() * sizeof(float); }

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& stem) {
  std::ofstream bin(stem + ".artc", std::ios::binary);
  if (!bin) throw std::runtime_error("write_corpus: cannot open " + stem + ".artc");
  bin.write(kMagic, 4);
  uint32_t version = kSidecarVersion;
  bin.write(reinterpret_cast<const char*>(&version), sizeof(version));

  std::ofstream manifest(stem + ".jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("write_corpus: cannot open " + stem + ".jsonl");

  size_t offset = 8;  // magic + version
  for (const Utterance& u : corpus.utterances) {
    json line;
    line["id"] = u.id;
    line["transcript"] = u.transcript;
    line["n_frames_100"] = u.tvs_100.frames.shape[0];
    line["n_frames_50"] = u.tvs_50.frames.shape[0];
    line["feature_dim"] = u.features.shape[1];
    json offsets;
    offsets["tvs_100"] = offset;
    offset += tensor_bytes(u.tvs_100.frames);
    offsets["tvs_50"] = offset;
    offset += tensor_bytes(u.tvs_50.frames);
    offsets["features"] = offset;
    offset += tensor_bytes(u.features);
    line["offsets"] = offsets;
    manifest << line.dump() << "\n";

    append_f32(bin, u.tvs_100.frames);
    append_f32(bin, u.tvs_50.frames);
    append_f32(bin, u.features);
  }
  if (!bin.good() || !manifest.good()) {
    throw std::runtime_error("write_corpus: write failed for stem " + stem);
  }
}

namespace {

Tensor read_f32_block(const std::vector<char>& payload, size_t offset, int rows, int cols,
                      const std::string& id) {
  size_t need = static_cast<size_t>(rows) * cols * sizeof(float);
  if (offset + need > payload.size()) {
    throw std::runtime_error("read_corpus: truncated payload for " + id + ": need bytes [" +
                             std::to_string(offset) + ", " + std::to_string(offset + need) +
                             ") but sidecar has " + std::to_string(payload.size()));
  }
  Tensor t = Tensor::zeros({rows, cols});
  for (size_t i = 0; i < static_cast<size_t>(rows) * cols; ++i) {
    float f;
    std::memcpy(&f, payload.data() + offset + i * sizeof(float), sizeof(float));
    t.data[i] = static_cast<double>(f);
  }
  return t;
}

}  // namespace

LoadedCorpus read_corpus(const std::string& stem) {
  std::ifstream bin(stem + ".artc", std::ios::binary);
  if (!bin) throw std::runtime_error("read_corpus: cannot open " + stem + ".artc");
  std::vector<char> payload((std::istreambuf_iterator<char>(bin)),
                            std::istreambuf_iterator<char>());
  if (payload.size() < 8 || std::memcmp(payload.data(), kMagic, 4) != 0) {
    throw std::runtime_error("read_corpus: bad magic in " + stem + ".artc");
  }
  uint32_t version;
  std::memcpy(&version, payload.data() + 4, sizeof(version));
  if (version != kSidecarVersion) {
    throw std::runtime_error("read_corpus: unsupported sidecar version " +
                             std::to_string(version));
  }

  std::ifstream manifest(stem + ".jsonl");
  if (!manifest) throw std::runtime_error("read_corpus: cannot open " + stem + ".jsonl");

  LoadedCorpus out;
  std::string line;
  size_t expected_offset = 8;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    Utterance u;
    int n100 = 0, n50 = 0, fdim = 0;
    size_t o100 = 0, o50 = 0, ofeat = 0;
    try {
      j = json::parse(line);
      u.id = j.at("id").get<std::string>();
      u.transcript = j.at("transcript").get<std::string>();
      n100 = j.at("n_frames_100").get<int>();
      n50 = j.at("n_frames_50").get<int>();
      fdim = j.at("feature_dim").get<int>();
      const json& offs = j.at("offsets");
      o100 = offs.at("tvs_100").get<size_t>();
      o50 = offs.at("tvs_50").get<size_t>();
      ofeat = offs.at("features").get<size_t>();
    } catch (const json::exception& e) {
      throw std::runtime_error("read_corpus: bad manifest line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    if (n50 != n100 / 2 || n100 < 2 || fdim < 1) {
      throw std::runtime_error("read_corpus: inconsistent frame counts for " + u.id);
    }
    if (out.feature_dim == 0) out.feature_dim = fdim;
    if (fdim != out.feature_dim) {
      throw std::runtime_error("read_corpus: feature_dim mismatch at " + u.id);
    }
    size_t b100 = static_cast<size_t>(n100) * kNumTvs * sizeof(float);
    size_t b50 = static_cast<size_t>(n50) * kNumTvs * sizeof(float);
    if (o100 != expected_offset || o50 != o100 + b100 || ofeat != o50 + b50) {
      throw std::runtime_error("read_corpus: manifest/payload offsets disagree for " + u.id);
    }
    u.tvs_100 = TvTrajectory{100, read_f32_block(payload, o100, n100, kNumTvs, u.id)};
    u.tvs_50 = TvTrajectory{50, read_f32_block(payload, o50, n50, kNumTvs, u.id)};
    u.features = read_f32_block(payload, ofeat, n50, fdim, u.id);
    expected_offset = ofeat + static_cast<size_t>(n50) * fdim * sizeof(float);
    out.utterances.push_back(std::move(u));
  }
  if (out.utterances.empty()) {
    throw std::runtime_error("read_corpus: empty manifest " + stem + ".jsonl");
  }
  if (expected_offset != payload.size()) {
    throw std::runtime_error("read_corpus: sidecar has trailing bytes: expected size " +
                             std::to_string(expected_offset) + ", found " +
                             std::to_string(payload.size()));
  }
  return out;
}

}  // namespace artic::synthdata
