#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "artic/decode.hpp"
#include "artic/losses.hpp"
#include "artic/model.hpp"
#include "artic/synthdata.hpp"
#include "artic/tensor.hpp"
#include "json.hpp"

namespace artic::train {

using diff::Tensor;

enum class LossMode { kStatic, kUbw };

struct TrainConfig {
  double lr = 3e-4;
  int steps = 2000;
  int batch_size = 8;
  double grad_clip = 5.0;  // global L2 norm ceiling
  int seed = 1;
  LossMode loss_mode = LossMode::kUbw;
  model::Variant variant = model::Variant::kProposed;
  losses::LossWeights static_weights{};  // used in static mode only
  int eval_every = 0;                    // informational; evaluation is harness-driven
  int subset_size = 0;                   // 0 = all; else train on the corpus prefix
};

void validate(const TrainConfig& cfg);

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  long long t = 0;
};

// Standard bias-corrected Adam; missing or misshapen gradients are an error
// naming the parameter.
void adam_step(model::ModelParams& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Scales `grads` in place so the global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_gradients(std::map<std::string, Tensor>& grads, double max_norm);

struct PaddedUtterance {
  int corpus_index = 0;
  Tensor features;         // T_pad x F, zero-padded suffix
  Tensor tvs;              // T_pad x 9
  std::vector<bool> mask;  // true on the first valid_frames entries
  int valid_frames = 0;
  std::vector<int> target;  // CTC class ids
};

struct Batch {
  std::vector<PaddedUtterance> items;
};

// Deterministic shuffle per (seed, epoch); every utterance appears exactly
// once per epoch; items padded to the batch max length.
std::vector<Batch> make_batches(const std::vector<synthdata::Utterance>& corpus, int batch_size,
                                int seed, int epoch);

struct TraceRow {
  long long step = 0;  // 1-based, the step just completed
  double l_ctc = 0.0;
  std::optional<double> l_mae;  // absent for the baseline variant
  double l_total = 0.0;
  std::optional<double> s_ctc;  // ubw mode only
  std::optional<double> s_mae;
  double grad_norm = 0.0;  // pre-clip global L2 norm
};

// CSV: step,l_ctc,l_mae,l_total,s_ctc,s_mae,grad_norm (absent fields empty).
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

struct Checkpoint {
  uint32_t version = 1;
  model::ModelConfig model_config;
  model::ModelParams params;
  AdamState adam;
  long long step = 0;
  int seed = 0;  // batching streams derive from (seed, epoch), so this plus
                 // `step` is the complete RNG state
};

// Binary container: magic "ARTK", version, JSON header with the config and a
// tensor offset table, then raw little-endian 64-bit payload.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json model_config_to_json(const model::ModelConfig& config);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainResult {
  model::ModelParams params;
  std::vector<TraceRow> trace;
  AdamState adam;
  long long final_step = 0;
};

// Runs cfg.steps optimization steps (continuing from `resume` if given).
// Baseline optimizes CTC alone; proposed optimizes the joint loss under the
// configured combiner. Deterministic per (cfg, corpus).
TrainResult train_model(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                        const std::vector<synthdata::Utterance>& corpus,
                        const Checkpoint* resume = nullptr);

struct EvalReport {
  std::string corpus_id;
  std::string variant;
  int subset_size = 0;
  int seed = 0;
  double wer_nolm = 0.0;
  double cer_nolm = 0.0;
  std::optional<double> wer_lm;
  std::optional<double> mean_ppmc;  // proposed variant only
  std::array<std::optional<double>, kNumTvs> per_channel_ppmc{};
  decode::DecodeConfig decode_cfg;
  std::optional<int> lm_order;
  std::optional<double> lm_k;

  nlohmann::json to_json() const;
};

// Greedy (and, with an LM, beam-search) decoding over the whole corpus;
// corpus WER = total edits / total reference words. Read-only on params.
EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& mcfg,
                    const std::vector<synthdata::Utterance>& corpus,
                    const decode::DecodeConfig& dcfg, const decode::NGramModel* lm,
                    const std::string& corpus_id, int seed, int subset_size);

}  // namespace artic::train
