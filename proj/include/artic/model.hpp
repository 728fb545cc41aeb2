#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "artic/tape.hpp"
#include "artic/tensor.hpp"

namespace artic::model {

using diff::Tape;
using diff::Tensor;
using diff::Var;

enum class Variant { kBaseline, kProposed };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);  // throws on unknown names

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int feature_dim = 20;   // acoustic frame width
  int n_tvs = 9;          // tract-variable channels, fixed
  int vocab_size = 0;     // graphemes, excluding blank
  Variant variant = Variant::kProposed;
  int max_len = 512;      // positional table size
  int seed = 1;
};

// Throws std::invalid_argument naming the violated field.
void validate(const ModelConfig& config);

// Blank is always the last class index.
inline int blank_index(const ModelConfig& config) { return config.vocab_size; }

// Named parameter set. Ordered map so iteration (optimizer, checkpoints,
// staging) is deterministic.
using ModelParams = std::map<std::string, Tensor>;

// Xavier-uniform weights, zero biases, layer-norm gain 1 / bias 0,
// s_ctc = s_mae = 0. Deterministic per seed; encoder weights are drawn first
// so both variants share encoder values for a given seed.
ModelParams init_params(const ModelConfig& config, int seed);

// Parameters staged as leaves on a tape for one forward/backward pass.
struct StagedModel {
  ModelConfig config;
  std::map<std::string, Var> p;

  Var at(const std::string& name) const;
};

StagedModel stage(Tape& t, const ModelConfig& config, const ModelParams& params, bool trainable);

// Sinusoidal position table, rows 0..T-1.
Tensor positional_encoding(int T, int d_model);

// Input projection + positions + n_layers pre-norm self-attention blocks +
// final layer-norm. `mask` marks valid frames; padded frames get -inf
// attention logits so they cannot influence valid outputs.
Var encode(Tape& t, const StagedModel& m, Var features, const std::vector<bool>& mask);

// One affine map d_model -> 9, no nonlinearity.
Var si_head(Tape& t, const StagedModel& m, Var embeddings);

// Cross-attention: queries from predicted TVs, keys/values from the acoustic
// embeddings; residual adds the acoustic stream; feed-forward sublayer after.
Var fusion_block(Tape& t, const StagedModel& m, Var tv_pred, Var embeddings,
                 const std::vector<bool>& mask);

// Affine d_model -> vocab+1 followed by row-wise log-softmax.
Var ctc_head(Tape& t, const StagedModel& m, Var fused);

struct ForwardOutput {
  Var log_probs;                // T x (vocab+1), normalized log rows
  std::optional<Var> tv_pred;   // T x 9, proposed variant only
};

// Full network on one tape, so a joint loss backpropagates everywhere.
// tv_pred is not detached before querying fusion.
ForwardOutput forward(Tape& t, const StagedModel& m, Var features,
                      const std::vector<bool>& mask);

// Convenience: stage + forward in one call.
ForwardOutput forward(Tape& t, const ModelConfig& config, const ModelParams& params,
                      const Tensor& features, const std::vector<bool>& mask, bool trainable);

}  // namespace artic::model
