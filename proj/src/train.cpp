#include "artic/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "artic/metrics.hpp"
#include "artic/rng.hpp"

namespace artic::train {

namespace {

using nlohmann::json;

constexpr char kCkptMagic[4] = {'A', 'R', 'T', 'K'};
constexpr uint32_t kCkptVersion = 1;

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (cfg.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cfg.grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
  if (cfg.subset_size < 0) throw std::invalid_argument("subset_size must be >= 0");
}

void adam_step(model::ModelParams& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  state.t += 1;
  double corr1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double corr2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (auto& [name, param] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw std::invalid_argument("adam_step: no gradient for parameter '" + name + "'");
    }
    const Tensor& g = git->second;
    if (g.shape != param.shape) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for parameter '" + name +
                                  "'");
    }
    std::vector<double>& m = state.m[name];
    std::vector<double>& v = state.v[name];
    if (m.empty()) m.assign(param.data.size(), 0.0);
    if (v.empty()) v.assign(param.data.size(), 0.0);
    for (size_t i = 0; i < param.data.size(); ++i) {
      double gi = g.data[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      double mhat = m[i] / corr1;
      double vhat = v[i] / corr2;
      param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_gradients(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    for (double v : g.data) sq += v * v;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
      (void)name;
      for (double& v : g.data) v *= scale;
    }
  }
  return norm;
}

std::vector<Batch> make_batches(const std::vector<synthdata::Utterance>& corpus, int batch_size,
                                int seed, int epoch) {
  if (corpus.empty()) throw std::invalid_argument("make_batches: empty corpus");
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  int n = static_cast<int>(corpus.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(static_cast<uint64_t>(seed), 0xBA7C000ULL + static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i >= 1; --i) {  // Fisher-Yates
    int j = rng.uniform_int(0, i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  std::vector<Batch> batches;
  for (int begin = 0; begin < n; begin += batch_size) {
    int end = std::min(n, begin + batch_size);
    int max_t = 0;
    for (int i = begin; i < end; ++i) {
      max_t = std::max(max_t, corpus[static_cast<size_t>(order[static_cast<size_t>(i)])]
                                  .features.shape[0]);
    }
    Batch batch;
    for (int i = begin; i < end; ++i) {
      const synthdata::Utterance& u = corpus[static_cast<size_t>(order[static_cast<size_t>(i)])];
      int t_valid = u.features.shape[0];
      int f_dim = u.features.shape[1];
      PaddedUtterance item;
      item.corpus_index = order[static_cast<size_t>(i)];
      item.valid_frames = t_valid;
      item.features = Tensor::zeros({max_t, f_dim});
      std::copy(u.features.data.begin(), u.features.data.end(), item.features.data.begin());
      item.tvs = Tensor::zeros({max_t, kNumTvs});
      std::copy(u.tvs_50.frames.data.begin(), u.tvs_50.frames.data.end(),
                item.tvs.data.begin());
      item.mask.assign(static_cast<size_t>(max_t), false);
      for (int tt = 0; tt < t_valid; ++tt) item.mask[static_cast<size_t>(tt)] = true;
      item.target = synthdata::transcript_to_ids(u.transcript);
      batch.items.push_back(std::move(item));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "step,l_ctc,l_mae,l_total,s_ctc,s_mae,grad_norm\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  for (const TraceRow& r : trace) {
    out << r.step << ',' << fmt(r.l_ctc) << ',' << (r.l_mae ? fmt(*r.l_mae) : "") << ','
        << fmt(r.l_total) << ',' << (r.s_ctc ? fmt(*r.s_ctc) : "") << ','
        << (r.s_mae ? fmt(*r.s_mae) : "") << ',' << fmt(r.grad_norm) << "\n";
  }
  if (!out.good()) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

nlohmann::json model_config_to_json(const model::ModelConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["feature_dim"] = c.feature_dim;
  j["n_tvs"] = c.n_tvs;
  j["vocab_size"] = c.vocab_size;
  j["variant"] = model::variant_name(c.variant);
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  return j;
}

model::ModelConfig model_config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.n_tvs = j.at("n_tvs").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.variant = model::variant_from_name(j.at("variant").get<std::string>());
  c.max_len = j.at("max_len").get<int>();
  c.seed = j.at("seed").get<int>();
  return c;
}

namespace {

void append_f64(std::string& payload, const std::vector<double>& data) {
  size_t old = payload.size();
  payload.resize(old + data.size() * sizeof(double));
  std::memcpy(payload.data() + old, data.data(), data.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["model_config"] = model_config_to_json(ckpt.model_config);
  header["step"] = ckpt.step;
  header["rng"] = {{"seed", ckpt.seed}};
  header["adam_t"] = ckpt.adam.t;

  std::string payload;
  json table = json::array();
  auto add_entry = [&](const std::string& name, const std::string& kind,
                       const std::vector<int>& shape, const std::vector<double>& data) {
    json e;
    e["name"] = name;
    e["kind"] = kind;
    e["shape"] = shape;
    e["offset"] = payload.size();
    e["count"] = data.size();
    table.push_back(e);
    append_f64(payload, data);
  };
  for (const auto& [name, tensor] : ckpt.params) {
    add_entry(name, "param", tensor.shape, tensor.data);
  }
  for (const auto& [name, m] : ckpt.adam.m) {
    add_entry(name, "adam_m", {static_cast<int>(m.size())}, m);
  }
  for (const auto& [name, v] : ckpt.adam.v) {
    add_entry(name, "adam_v", {static_cast<int>(v.size())}, v);
  }
  header["tensors"] = table;

  std::string header_bytes = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCkptMagic, 4);
  uint32_t version = kCkptVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  uint64_t header_len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out.good()) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  uint32_t version;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  if (version != kCkptVersion) {
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version " +
                             std::to_string(version));
  }
  uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
  if (16 + header_len > bytes.size()) {
    throw std::runtime_error("load_checkpoint: truncated header in " + path);
  }
  json header;
  try {
    header = json::parse(std::string(bytes.data() + 16, header_len));
  } catch (const json::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header JSON: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.version = version;
  ckpt.model_config = model_config_from_json(header.at("model_config"));
  ckpt.step = header.at("step").get<long long>();
  ckpt.seed = header.at("rng").at("seed").get<int>();
  ckpt.adam.t = header.at("adam_t").get<long long>();

  // the set of legal tensor names follows from the config
  model::ModelParams reference = model::init_params(ckpt.model_config, 0);
  size_t payload_base = 16 + header_len;
  for (const json& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::string kind = e.at("kind").get<std::string>();
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    size_t offset = e.at("offset").get<size_t>();
    size_t count = e.at("count").get<size_t>();
    if (reference.find(name) == reference.end()) {
      throw std::runtime_error("load_checkpoint: unknown tensor name '" + name + "'");
    }
    size_t end = payload_base + offset + count * sizeof(double);
    if (end > bytes.size()) {
      throw std::runtime_error("load_checkpoint: truncated payload for '" + name + "'");
    }
    std::vector<double> data(count);
    std::memcpy(data.data(), bytes.data() + payload_base + offset, count * sizeof(double));
    if (kind == "param") {
      Tensor t;
      t.shape = shape;
      t.data = std::move(data);
      t.requires_grad = true;
      if (t.size() != static_cast<int64_t>(count)) {
        throw std::runtime_error("load_checkpoint: shape/count mismatch for '" + name + "'");
      }
      ckpt.params[name] = std::move(t);
    } else if (kind == "adam_m") {
      ckpt.adam.m[name] = std::move(data);
    } else if (kind == "adam_v") {
      ckpt.adam.v[name] = std::move(data);
    } else {
      throw std::runtime_error("load_checkpoint: unknown tensor kind '" + kind + "'");
    }
  }
  if (ckpt.params.size() != reference.size()) {
    throw std::runtime_error("load_checkpoint: parameter set incomplete in " + path);
  }
  return ckpt;
}

namespace {

struct StepOutcome {
  std::map<std::string, Tensor> grads;
  double l_ctc = 0.0;
  double l_mae = 0.0;
  double l_total = 0.0;
};

// One batch: forward every utterance on a shared tape, combine the mean
// losses per the configured mode, backpropagate once.
StepOutcome run_batch(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                      const model::ModelParams& params, const Batch& batch) {
  diff::Tape tape;
  model::StagedModel staged = model::stage(tape, mcfg, params, /*trainable=*/true);
  int blank = model::blank_index(mcfg);
  bool proposed = mcfg.variant == model::Variant::kProposed;
  double inv_n = 1.0 / static_cast<double>(batch.items.size());

  std::optional<diff::Var> ctc_sum;
  std::optional<diff::Var> mae_sum;
  for (const PaddedUtterance& item : batch.items) {
    Tensor feats = item.features;
    model::ForwardOutput out = model::forward(tape, staged, tape.constant(std::move(feats)),
                                              item.mask);
    diff::Var valid_rows = diff::slice_rows(tape, out.log_probs, 0, item.valid_frames);
    diff::Var utt_ctc = losses::ctc_loss(tape, valid_rows, item.target, blank);
    ctc_sum = ctc_sum ? diff::add(tape, *ctc_sum, utt_ctc) : utt_ctc;
    if (proposed) {
      Tensor tv_target = item.tvs;
      diff::Var utt_mae = losses::mae_loss(tape, *out.tv_pred,
                                           tape.constant(std::move(tv_target)), item.mask);
      mae_sum = mae_sum ? diff::add(tape, *mae_sum, utt_mae) : utt_mae;
    }
  }

  diff::Var l_ctc = diff::scale(tape, *ctc_sum, inv_n);
  diff::Var total = l_ctc;
  StepOutcome outcome;
  if (proposed) {
    diff::Var l_mae = diff::scale(tape, *mae_sum, inv_n);
    outcome.l_mae = tape.value(l_mae).data[0];
    if (cfg.loss_mode == LossMode::kStatic) {
      total = losses::combine_static(tape, l_ctc, l_mae, cfg.static_weights);
    } else {
      total = losses::combine_ubw(tape, l_ctc, l_mae, staged.at("s_ctc"), staged.at("s_mae"));
    }
  }
  outcome.l_ctc = tape.value(l_ctc).data[0];
  outcome.l_total = tape.value(total).data[0];
  outcome.grads = tape.backward(total);
  return outcome;
}

}  // namespace

TrainResult train_model(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                        const std::vector<synthdata::Utterance>& corpus,
                        const Checkpoint* resume) {
  validate(cfg);
  model::validate(mcfg);
  if (cfg.variant != mcfg.variant) {
    throw std::invalid_argument("train_model: TrainConfig and ModelConfig variants differ");
  }
  if (corpus.empty()) throw std::invalid_argument("train_model: empty corpus");

  std::vector<synthdata::Utterance> subset;
  const std::vector<synthdata::Utterance>* data = &corpus;
  if (cfg.subset_size > 0 && cfg.subset_size < static_cast<int>(corpus.size())) {
    subset.assign(corpus.begin(), corpus.begin() + cfg.subset_size);
    data = &subset;
  }

  TrainResult result;
  long long start_step = 0;
  if (resume != nullptr) {
    if (resume->params.empty()) throw std::invalid_argument("train_model: empty resume state");
    result.params = resume->params;
    result.adam = resume->adam;
    start_step = resume->step;
  } else {
    result.params = model::init_params(mcfg, cfg.seed);
  }

  int batches_per_epoch =
      (static_cast<int>(data->size()) + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<Batch> batches;
  int loaded_epoch = -1;

  std::optional<TraceRow> last_finite;
  for (long long step = start_step; step < cfg.steps; ++step) {
    int epoch = static_cast<int>(step / batches_per_epoch);
    int pos = static_cast<int>(step % batches_per_epoch);
    if (epoch != loaded_epoch) {
      batches = make_batches(*data, cfg.batch_size, cfg.seed, epoch);
      loaded_epoch = epoch;
    }

    StepOutcome out = run_batch(cfg, mcfg, result.params, batches[static_cast<size_t>(pos)]);

    TraceRow row;
    row.step = step + 1;
    row.l_ctc = out.l_ctc;
    row.l_total = out.l_total;
    if (mcfg.variant == model::Variant::kProposed) {
      row.l_mae = out.l_mae;
      if (cfg.loss_mode == LossMode::kUbw) {
        row.s_ctc = result.params.at("s_ctc").data[0];
        row.s_mae = result.params.at("s_mae").data[0];
      }
    }
    if (!std::isfinite(out.l_total)) {
      std::string detail = last_finite
                               ? " (last finite: step " + std::to_string(last_finite->step) +
                                     ", l_total " + std::to_string(last_finite->l_total) + ")"
                               : " (no finite step completed)";
      throw std::runtime_error("train_model: non-finite loss at step " +
                               std::to_string(step + 1) + detail);
    }

    row.grad_norm = clip_gradients(out.grads, cfg.grad_clip);
    adam_step(result.params, out.grads, result.adam, cfg.lr);
    result.trace.push_back(row);
    last_finite = row;
  }
  result.final_step = cfg.steps;
  return result;
}

nlohmann::json EvalReport::to_json() const {
  json j;
  j["corpus_id"] = corpus_id;
  j["variant"] = variant;
  j["subset_size"] = subset_size;
  j["seed"] = seed;
  j["wer_nolm"] = wer_nolm;
  j["cer_nolm"] = cer_nolm;
  j["wer_lm"] = wer_lm ? json(*wer_lm) : json(nullptr);
  j["mean_ppmc"] = mean_ppmc ? json(*mean_ppmc) : json(nullptr);
  if (mean_ppmc) {
    json pc;
    for (int ch = 0; ch < kNumTvs; ++ch) {
      pc[kTvChannelNames[static_cast<size_t>(ch)]] =
          per_channel_ppmc[static_cast<size_t>(ch)]
              ? json(*per_channel_ppmc[static_cast<size_t>(ch)])
              : json(nullptr);
    }
    j["ppmc"] = pc;
  } else {
    j["ppmc"] = nullptr;
  }
  json dec;
  dec["beam_width"] = decode_cfg.beam_width;
  dec["alpha"] = decode_cfg.alpha;
  dec["beta"] = decode_cfg.beta;
  dec["blank"] = decode_cfg.blank;
  if (lm_order) dec["lm_order"] = *lm_order;
  if (lm_k) dec["lm_k"] = *lm_k;
  j["decode"] = dec;
  return j;
}

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& mcfg,
                    const std::vector<synthdata::Utterance>& corpus,
                    const decode::DecodeConfig& dcfg, const decode::NGramModel* lm,
                    const std::string& corpus_id, int seed, int subset_size) {
  model::validate(mcfg);
  if (corpus.empty()) throw std::invalid_argument("evaluate: empty corpus");
  const std::string& abc = synthdata::alphabet();
  bool proposed = mcfg.variant == model::Variant::kProposed;
  int n = static_cast<int>(corpus.size());

  struct PerUtt {
    metrics::EditCounts wer_greedy;
    metrics::EditCounts cer_greedy;
    metrics::EditCounts wer_beam;
    Tensor tv_pred;  // valid frames only (proposed)
  };
  std::vector<PerUtt> rows(static_cast<size_t>(n));

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const synthdata::Utterance& u = corpus[static_cast<size_t>(i)];
    std::vector<bool> mask(static_cast<size_t>(u.features.shape[0]), true);
    diff::Tape tape;
    model::ForwardOutput out =
        model::forward(tape, mcfg, params, u.features, mask, /*trainable=*/false);
    const Tensor& log_probs = tape.value(out.log_probs);

    std::string greedy_text =
        decode::ids_to_text(decode::greedy_decode(log_probs, dcfg.blank), abc);
    PerUtt& r = rows[static_cast<size_t>(i)];
    r.wer_greedy = metrics::edit_distance(metrics::tokenize_words(u.transcript),
                                          metrics::tokenize_words(greedy_text));
    {
      // character tokens via the metrics whitespace convention
      std::vector<std::string> rc, hc;
      for (char c : u.transcript) rc.emplace_back(1, c);
      for (char c : greedy_text) hc.emplace_back(1, c);
      r.cer_greedy = metrics::edit_distance(rc, hc);
    }
    if (lm != nullptr) {
      std::vector<decode::BeamHypothesis> hyps = decode::beam_search(log_probs, abc, lm, dcfg);
      const std::string& beam_text = hyps.front().prefix;
      r.wer_beam = metrics::edit_distance(metrics::tokenize_words(u.transcript),
                                          metrics::tokenize_words(beam_text));
    }
    if (proposed) {
      r.tv_pred = tape.value(*out.tv_pred);
    }
  }

  EvalReport rep;
  rep.corpus_id = corpus_id;
  rep.variant = model::variant_name(mcfg.variant);
  rep.subset_size = subset_size;
  rep.seed = seed;
  rep.decode_cfg = dcfg;
  if (lm != nullptr) {
    rep.lm_order = lm->order;
    rep.lm_k = lm->k;
  }

  long long wer_edits = 0, wer_ref = 0, cer_edits = 0, cer_ref = 0, beam_edits = 0;
  for (const PerUtt& r : rows) {
    wer_edits += r.wer_greedy.total();
    wer_ref += r.wer_greedy.ref_len;
    cer_edits += r.cer_greedy.total();
    cer_ref += r.cer_greedy.ref_len;
    beam_edits += r.wer_beam.total();
  }
  rep.wer_nolm = static_cast<double>(wer_edits) / static_cast<double>(wer_ref);
  rep.cer_nolm = static_cast<double>(cer_edits) / static_cast<double>(cer_ref);
  if (lm != nullptr) {
    rep.wer_lm = static_cast<double>(beam_edits) / static_cast<double>(wer_ref);
  }

  if (proposed) {
    long long total_frames = 0;
    for (int i = 0; i < n; ++i) total_frames += rows[static_cast<size_t>(i)].tv_pred.shape[0];
    Tensor pred = Tensor::zeros({static_cast<int>(total_frames), kNumTvs});
    Tensor target = Tensor::zeros({static_cast<int>(total_frames), kNumTvs});
    size_t at = 0;
    for (int i = 0; i < n; ++i) {
      const Tensor& p = rows[static_cast<size_t>(i)].tv_pred;
      const Tensor& g = corpus[static_cast<size_t>(i)].tvs_50.frames;
      std::copy(p.data.begin(), p.data.end(), pred.data.begin() + static_cast<long>(at));
      std::copy(g.data.begin(), g.data.end(), target.data.begin() + static_cast<long>(at));
      at += p.data.size();
    }
    std::vector<bool> all(static_cast<size_t>(total_frames), true);
    metrics::PpmcReport pr = metrics::ppmc_report(pred, target, all);
    rep.mean_ppmc = pr.mean;
    rep.per_channel_ppmc = pr.per_channel;
  }
  return rep;
}

}  // namespace artic::train
