#include "artic/model.hpp"

#include <cmath>
#include <stdexcept>

#include "artic/rng.hpp"

namespace artic::model {

namespace {

constexpr double kMaskLogit = -1e30;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  enum Kind { kWeight, kBias, kGain, kScalarZero } kind;
};

// Canonical parameter list: encoder first so both variants share encoder
// draws for a given seed, then variant-specific heads.
std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  auto weight = [&](const std::string& n, int in, int out) {
    specs.push_back({n, {in, out}, ParamSpec::kWeight});
  };
  auto bias = [&](const std::string& n, int dim) {
    specs.push_back({n, {dim}, ParamSpec::kBias});
  };
  auto ln = [&](const std::string& prefix) {
    specs.push_back({prefix + ".g", {c.d_model}, ParamSpec::kGain});
    specs.push_back({prefix + ".b", {c.d_model}, ParamSpec::kBias});
  };
  auto ffn = [&](const std::string& prefix) {
    weight(prefix + ".w1", c.d_model, c.d_ff);
    bias(prefix + ".b1", c.d_ff);
    weight(prefix + ".w2", c.d_ff, c.d_model);
    bias(prefix + ".b2", c.d_model);
  };

  weight("enc.in_proj.w", c.feature_dim, c.d_model);
  bias("enc.in_proj.b", c.d_model);
  for (int l = 0; l < c.n_layers; ++l) {
    std::string p = "enc.l" + std::to_string(l);
    ln(p + ".ln1");
    weight(p + ".attn.wq", c.d_model, c.d_model);
    bias(p + ".attn.bq", c.d_model);
    weight(p + ".attn.wk", c.d_model, c.d_model);
    bias(p + ".attn.bk", c.d_model);
    weight(p + ".attn.wv", c.d_model, c.d_model);
    bias(p + ".attn.bv", c.d_model);
    weight(p + ".attn.wo", c.d_model, c.d_model);
    bias(p + ".attn.bo", c.d_model);
    ln(p + ".ln2");
    ffn(p + ".ffn");
  }
  ln("enc.final_ln");

  if (c.variant == Variant::kProposed) {
    weight("si_head.w", c.d_model, c.n_tvs);
    bias("si_head.b", c.n_tvs);
    weight("fusion.q_proj.w", c.n_tvs, c.d_model);
    bias("fusion.q_proj.b", c.d_model);
    ln("fusion.ln1");
    weight("fusion.attn.wk", c.d_model, c.d_model);
    bias("fusion.attn.bk", c.d_model);
    weight("fusion.attn.wv", c.d_model, c.d_model);
    bias("fusion.attn.bv", c.d_model);
    weight("fusion.attn.wo", c.d_model, c.d_model);
    bias("fusion.attn.bo", c.d_model);
    ln("fusion.ln2");
    ffn("fusion.ffn");
  }

  weight("ctc_head.w", c.d_model, c.vocab_size + 1);
  bias("ctc_head.b", c.vocab_size + 1);

  if (c.variant == Variant::kProposed) {
    specs.push_back({"s_ctc", {1}, ParamSpec::kScalarZero});
    specs.push_back({"s_mae", {1}, ParamSpec::kScalarZero});
  }
  return specs;
}

Tensor additive_key_mask(int t_query, const std::vector<bool>& mask) {
  int t_key = static_cast<int>(mask.size());
  Tensor m = Tensor::zeros({t_query, t_key});
  for (int j = 0; j < t_key; ++j) {
    if (mask[j]) continue;
    for (int i = 0; i < t_query; ++i) m.data[static_cast<size_t>(i) * t_key + j] = kMaskLogit;
  }
  return m;
}

// Scaled dot-product attention over n_heads column blocks of q/k/v, with an
// additive mask that zeroes out padded keys.
Var multihead_attention(Tape& t, Var q, Var k, Var v, int n_heads,
                        const std::vector<bool>& key_mask) {
  int d = t.value(q).shape[1];
  int dh = d / n_heads;
  int tq = t.value(q).shape[0];
  Var mask_c = t.constant(additive_key_mask(tq, key_mask));
  std::vector<Var> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Var qh = diff::slice_cols(t, q, h * dh, dh);
    Var kh = diff::slice_cols(t, k, h * dh, dh);
    Var vh = diff::slice_cols(t, v, h * dh, dh);
    Var scores = diff::scale(t, diff::matmul(t, qh, diff::transpose(t, kh)),
                             1.0 / std::sqrt(static_cast<double>(dh)));
    Var weights = diff::softmax_lastaxis(t, diff::add(t, scores, mask_c));
    heads.push_back(diff::matmul(t, weights, vh));
  }
  return diff::concat_cols(t, heads);
}

Var affine(Tape& t, const StagedModel& m, Var x, const std::string& prefix) {
  return diff::add_rowvec(t, diff::matmul(t, x, m.at(prefix + ".w")), m.at(prefix + ".b"));
}

Var ffn_sublayer(Tape& t, const StagedModel& m, Var x, const std::string& prefix) {
  Var h = diff::gelu(t, diff::add_rowvec(t, diff::matmul(t, x, m.at(prefix + ".w1")),
                                         m.at(prefix + ".b1")));
  return diff::add_rowvec(t, diff::matmul(t, h, m.at(prefix + ".w2")), m.at(prefix + ".b2"));
}

bool has_fusion_params(const ModelParams& params) {
  for (const auto& [name, tensor] : params) {
    (void)tensor;
    if (name.rfind("si_head", 0) == 0 || name.rfind("fusion", 0) == 0) return true;
  }
  return false;
}

}  // namespace

const char* variant_name(Variant v) {
  return v == Variant::kBaseline ? "baseline" : "proposed";
}

Variant variant_from_name(const std::string& name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "proposed") return Variant::kProposed;
  throw std::invalid_argument("unknown variant '" + name + "' (expected baseline or proposed)");
}

void validate(const ModelConfig& c) {
  require(c.d_model > 0, "d_model must be positive");
  require(c.n_layers > 0, "n_layers must be positive");
  require(c.n_heads > 0, "n_heads must be positive");
  require(c.d_ff > 0, "d_ff must be positive");
  require(c.feature_dim > 0, "feature_dim must be positive");
  require(c.max_len > 0, "max_len must be positive");
  require(c.d_model % c.n_heads == 0, "d_model must be divisible by n_heads");
  require(c.n_tvs == 9, "n_tvs must be 9");
  require(c.vocab_size >= 2, "vocab_size must be >= 2");
}

ModelParams init_params(const ModelConfig& config, int seed) {
  validate(config);
  ModelParams params;
  for (const ParamSpec& spec : param_specs(config)) {
    // Per-parameter stream keyed by name, so the same tensor gets the same
    // draw in every variant that contains it (matched-seed runs share their
    // common initialization).
    uint64_t name_hash = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : spec.name) name_hash = (name_hash ^ c) * 1099511628211ull;
    Rng rng(derive_seed(static_cast<uint64_t>(seed), name_hash));
    Tensor t = Tensor::zeros(spec.shape);
    t.requires_grad = true;
    switch (spec.kind) {
      case ParamSpec::kWeight: {
        double limit = std::sqrt(6.0 / (spec.shape[0] + spec.shape[1]));
        for (double& v : t.data) v = rng.uniform(-limit, limit);
        break;
      }
      case ParamSpec::kGain:
        for (double& v : t.data) v = 1.0;
        break;
      case ParamSpec::kBias:
      case ParamSpec::kScalarZero:
        break;  // already zero
    }
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

Var StagedModel::at(const std::string& name) const {
  auto it = p.find(name);
  if (it == p.end()) {
    throw std::invalid_argument("model parameter '" + name + "' is missing");
  }
  return it->second;
}

StagedModel stage(Tape& t, const ModelConfig& config, const ModelParams& params,
                  bool trainable) {
  validate(config);
  StagedModel m;
  m.config = config;
  for (const auto& [name, tensor] : params) {
    Tensor copy = tensor;
    copy.requires_grad = trainable;
    m.p.emplace(name, t.leaf(std::move(copy), name));
  }
  return m;
}

Tensor positional_encoding(int T, int d_model) {
  Tensor pe = Tensor::zeros({T, d_model});
  for (int pos = 0; pos < T; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.data[static_cast<size_t>(pos) * d_model + i] = std::sin(angle);
      if (i + 1 < d_model) {
        pe.data[static_cast<size_t>(pos) * d_model + i + 1] = std::cos(angle);
      }
    }
  }
  return pe;
}

Var encode(Tape& t, const StagedModel& m, Var features, const std::vector<bool>& mask) {
  const ModelConfig& c = m.config;
  const Tensor& fv = t.value(features);
  require(fv.shape.size() == 2, "encode: features must be a T x F matrix");
  int T = fv.shape[0];
  require(T >= 1, "encode: need at least one frame");
  require(fv.shape[1] == c.feature_dim,
          "encode: feature width " + std::to_string(fv.shape[1]) + " does not match feature_dim " +
              std::to_string(c.feature_dim));
  require(static_cast<int>(mask.size()) == T, "encode: mask length does not match frame count");
  require(T <= c.max_len, "encode: utterance length " + std::to_string(T) + " exceeds max_len " +
                              std::to_string(c.max_len));

  Var x = diff::add(t, affine(t, m, features, "enc.in_proj"),
                    t.constant(positional_encoding(T, c.d_model)));
  for (int l = 0; l < c.n_layers; ++l) {
    std::string p = "enc.l" + std::to_string(l);
    Var xn = diff::layer_norm(t, x, m.at(p + ".ln1.g"), m.at(p + ".ln1.b"));
    Var qp = diff::add_rowvec(t, diff::matmul(t, xn, m.at(p + ".attn.wq")), m.at(p + ".attn.bq"));
    Var kp = diff::add_rowvec(t, diff::matmul(t, xn, m.at(p + ".attn.wk")), m.at(p + ".attn.bk"));
    Var vp = diff::add_rowvec(t, diff::matmul(t, xn, m.at(p + ".attn.wv")), m.at(p + ".attn.bv"));
    Var attn = multihead_attention(t, qp, kp, vp, c.n_heads, mask);
    Var proj =
        diff::add_rowvec(t, diff::matmul(t, attn, m.at(p + ".attn.wo")), m.at(p + ".attn.bo"));
    x = diff::add(t, x, proj);
    Var hn = diff::layer_norm(t, x, m.at(p + ".ln2.g"), m.at(p + ".ln2.b"));
    x = diff::add(t, x, ffn_sublayer(t, m, hn, p + ".ffn"));
  }
  return diff::layer_norm(t, x, m.at("enc.final_ln.g"), m.at("enc.final_ln.b"));
}

Var si_head(Tape& t, const StagedModel& m, Var embeddings) {
  return affine(t, m, embeddings, "si_head");
}

Var fusion_block(Tape& t, const StagedModel& m, Var tv_pred, Var embeddings,
                 const std::vector<bool>& mask) {
  const ModelConfig& c = m.config;
  int t_tv = t.value(tv_pred).shape[0];
  int t_emb = t.value(embeddings).shape[0];
  if (t_tv != t_emb) {
    throw std::invalid_argument("fusion_block: TV stream has " + std::to_string(t_tv) +
                                " frames but embeddings have " + std::to_string(t_emb));
  }
  Var kvn = diff::layer_norm(t, embeddings, m.at("fusion.ln1.g"), m.at("fusion.ln1.b"));
  Var q = diff::add(t, affine(t, m, tv_pred, "fusion.q_proj"),
                    t.constant(positional_encoding(t_tv, c.d_model)));
  Var k = diff::add_rowvec(t, diff::matmul(t, kvn, m.at("fusion.attn.wk")),
                           m.at("fusion.attn.bk"));
  Var v = diff::add_rowvec(t, diff::matmul(t, kvn, m.at("fusion.attn.wv")),
                           m.at("fusion.attn.bv"));
  Var attn = multihead_attention(t, q, k, v, c.n_heads, mask);
  Var proj = diff::add_rowvec(t, diff::matmul(t, attn, m.at("fusion.attn.wo")),
                              m.at("fusion.attn.bo"));
  Var x = diff::add(t, embeddings, proj);  // residual on the acoustic stream
  Var xn = diff::layer_norm(t, x, m.at("fusion.ln2.g"), m.at("fusion.ln2.b"));
  return diff::add(t, x, ffn_sublayer(t, m, xn, "fusion.ffn"));
}

Var ctc_head(Tape& t, const StagedModel& m, Var fused) {
  return diff::log_softmax_lastaxis(t, affine(t, m, fused, "ctc_head"));
}

ForwardOutput forward(Tape& t, const StagedModel& m, Var features,
                      const std::vector<bool>& mask) {
  bool staged_fusion = m.p.count("si_head.w") > 0;
  bool want_fusion = m.config.variant == Variant::kProposed;
  if (staged_fusion != want_fusion) {
    throw std::invalid_argument("forward: variant does not match staged parameters");
  }
  Var emb = encode(t, m, features, mask);
  if (!want_fusion) {
    return ForwardOutput{ctc_head(t, m, emb), std::nullopt};
  }
  Var tv = si_head(t, m, emb);
  Var fused = fusion_block(t, m, tv, emb, mask);
  return ForwardOutput{ctc_head(t, m, fused), tv};
}

ForwardOutput forward(Tape& t, const ModelConfig& config, const ModelParams& params,
                      const Tensor& features, const std::vector<bool>& mask, bool trainable) {
  if (has_fusion_params(params) != (config.variant == Variant::kProposed)) {
    throw std::invalid_argument("forward: variant does not match parameter set");
  }
  StagedModel m = stage(t, config, params, trainable);
  Tensor f = features;
  f.requires_grad = false;
  return forward(t, m, t.constant(std::move(f)), mask);
}

}  // namespace artic::model
