#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "artic/metrics.hpp"
#include "artic/train.hpp"

using namespace artic;
using namespace artic::train;
using artic::diff::Tensor;
using artic::diff::build_tensor;

namespace {

std::filesystem::path tmp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "artic_train_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

model::ModelConfig tiny_model(model::Variant variant, int seed) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 24;
  c.feature_dim = 20;
  c.vocab_size = synthdata::kVocabSize;
  c.variant = variant;
  c.max_len = 256;
  c.seed = seed;
  return c;
}

TrainConfig tiny_train(model::Variant variant, int steps, int seed) {
  TrainConfig t;
  t.lr = 1e-3;
  t.steps = steps;
  t.batch_size = 4;
  t.seed = seed;
  t.variant = variant;
  return t;
}

std::vector<synthdata::Utterance> tiny_corpus(int n, int seed) {
  synthdata::CorpusConfig c;
  c.n_utterances = n;
  c.seed = seed;
  c.min_words = 1;
  c.max_words = 1;
  return synthdata::generate_corpus(c).utterances;
}

bool params_equal(const model::ModelParams& a, const model::ModelParams& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape != t.shape || it->second.data != t.data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("optimizer first step and zero-gradient behavior") {
  model::ModelParams params;
  params["w"] = build_tensor({1}, {1.0});
  std::map<std::string, Tensor> grads;
  grads["w"] = build_tensor({1}, {2.0});
  AdamState st;
  adam_step(params, grads, st, 0.1);
  // bias-corrected first step moves by ~lr * sign(g)
  CHECK(params["w"].data[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-7));
  CHECK(st.t == 1);

  model::ModelParams zp;
  zp["w"] = build_tensor({1}, {0.5});
  std::map<std::string, Tensor> zg;
  zg["w"] = build_tensor({1}, {0.0});
  AdamState zst;
  adam_step(zp, zg, zst, 0.1);
  CHECK(zp["w"].data[0] == 0.5);

  // determinism: two runs from identical state agree bitwise
  model::ModelParams p1, p2;
  p1["w"] = build_tensor({2}, {0.3, -0.7});
  p2["w"] = build_tensor({2}, {0.3, -0.7});
  std::map<std::string, Tensor> g;
  g["w"] = build_tensor({2}, {0.11, -0.02});
  AdamState s1, s2;
  for (int i = 0; i < 5; ++i) {
    adam_step(p1, g, s1, 3e-4);
    adam_step(p2, g, s2, 3e-4);
  }
  CHECK(p1["w"].data == p2["w"].data);

  std::map<std::string, Tensor> missing;
  CHECK_THROWS_WITH_AS(adam_step(p1, missing, s1, 1e-3), doctest::Contains("w"),
                       std::invalid_argument);
}

TEST_CASE("gradient clipping reports the pre-clip norm and rescales in place") {
  std::map<std::string, Tensor> grads;
  grads["a"] = build_tensor({2}, {3.0, 0.0});
  grads["b"] = build_tensor({1}, {4.0});
  double norm = clip_gradients(grads, 2.5);
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
  double after = std::sqrt(grads["a"].data[0] * grads["a"].data[0] +
                           grads["b"].data[0] * grads["b"].data[0]);
  CHECK(after == doctest::Approx(2.5).epsilon(1e-12));

  std::map<std::string, Tensor> small;
  small["a"] = build_tensor({1}, {0.3});
  CHECK(clip_gradients(small, 2.5) == doctest::Approx(0.3));
  CHECK(small["a"].data[0] == 0.3);  // under the ceiling: untouched
}

TEST_CASE("batching covers each utterance once with deterministic shuffles") {
  auto corpus = tiny_corpus(5, 41);
  auto batches = make_batches(corpus, 2, /*seed=*/7, /*epoch=*/0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].items.size() == 2);
  CHECK(batches[1].items.size() == 2);
  CHECK(batches[2].items.size() == 1);

  std::set<int> seen;
  for (const Batch& b : batches) {
    int t_pad = b.items[0].features.rows();
    for (const PaddedUtterance& u : b.items) {
      seen.insert(u.corpus_index);
      CHECK(u.features.rows() == t_pad);
      CHECK(u.tvs.rows() == t_pad);
      CHECK(static_cast<int>(u.mask.size()) == t_pad);
      CHECK(u.valid_frames == corpus[u.corpus_index].features.rows());
      for (int i = 0; i < t_pad; ++i) CHECK(u.mask[i] == (i < u.valid_frames));
      // padded rows are zero
      for (int i = u.valid_frames; i < t_pad; ++i) {
        for (int j = 0; j < u.features.cols(); ++j) CHECK(u.features.at(i, j) == 0.0);
      }
      // valid rows are the original frames
      for (int i = 0; i < u.valid_frames; ++i) {
        for (int j = 0; j < u.features.cols(); ++j) {
          CHECK(u.features.at(i, j) == corpus[u.corpus_index].features.at(i, j));
        }
      }
      CHECK(u.target == synthdata::transcript_to_ids(corpus[u.corpus_index].transcript));
    }
  }
  CHECK(seen.size() == 5);

  auto again = make_batches(corpus, 2, 7, 0);
  for (size_t i = 0; i < batches.size(); ++i) {
    for (size_t j = 0; j < batches[i].items.size(); ++j) {
      CHECK(batches[i].items[j].corpus_index == again[i].items[j].corpus_index);
    }
  }
  auto epoch1 = make_batches(corpus, 2, 7, 1);
  bool order_changed = false;
  for (size_t i = 0; i < batches.size(); ++i) {
    for (size_t j = 0; j < batches[i].items.size(); ++j) {
      order_changed =
          order_changed || batches[i].items[j].corpus_index != epoch1[i].items[j].corpus_index;
    }
  }
  CHECK(order_changed);
}

TEST_CASE("trace CSV layout") {
  std::vector<TraceRow> rows(2);
  rows[0].step = 1;
  rows[0].l_ctc = 2.5;
  rows[0].l_mae = 0.75;
  rows[0].l_total = 3.25;
  rows[0].s_ctc = 0.0;
  rows[0].s_mae = -0.125;
  rows[0].grad_norm = 4.5;
  rows[1].step = 2;
  rows[1].l_ctc = 2.0;
  rows[1].l_total = 2.0;
  rows[1].grad_norm = 1.25;

  auto path = (tmp_dir() / "trace.csv").string();
  write_trace_csv(path, rows);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,l_ctc,l_mae,l_total,s_ctc,s_mae,grad_norm");
  std::getline(in, line);
  CHECK(line == "1,2.5,0.75,3.25,0,-0.125,4.5");
  std::getline(in, line);
  CHECK(line == "2,2,,2,,,1.25");
}

TEST_CASE("training runs deterministically and reduces both losses") {
  auto corpus = tiny_corpus(16, 42);
  TrainConfig tc = tiny_train(model::Variant::kProposed, 400, 1);
  model::ModelConfig mc = tiny_model(model::Variant::kProposed, 1);

  TrainResult a = train_model(tc, mc, corpus);
  TrainResult b = train_model(tc, mc, corpus);
  CHECK(params_equal(a.params, b.params));
  REQUIRE(a.trace.size() == 400);
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].l_total == b.trace[i].l_total);
    CHECK(a.trace[i].grad_norm == b.trace[i].grad_norm);
    REQUIRE(a.trace[i].l_mae.has_value());
    CHECK(a.trace[i].s_ctc.has_value());
  }
  CHECK(a.final_step == 400);

  // Per-step losses wobble with the batch draw, so compare 5-step windows.
  auto window_mean = [&](size_t start, auto getter) {
    double s = 0.0;
    for (size_t i = start; i < start + 5; ++i) s += getter(a.trace[i]);
    return s / 5.0;
  };
  auto get_ctc = [](const TraceRow& r) { return r.l_ctc; };
  auto get_mae = [](const TraceRow& r) { return *r.l_mae; };
  CHECK(window_mean(a.trace.size() - 5, get_ctc) < window_mean(0, get_ctc));
  CHECK(window_mean(a.trace.size() - 5, get_mae) < window_mean(0, get_mae));
}

TEST_CASE("baseline training optimizes the alignment loss alone") {
  auto corpus = tiny_corpus(8, 43);
  TrainConfig tc = tiny_train(model::Variant::kBaseline, 6, 2);
  model::ModelConfig mc = tiny_model(model::Variant::kBaseline, 2);
  TrainResult r = train_model(tc, mc, corpus);
  for (const TraceRow& row : r.trace) {
    CHECK(!row.l_mae.has_value());
    CHECK(!row.s_ctc.has_value());
    CHECK(row.l_total == row.l_ctc);
  }

  TrainConfig bad = tc;
  bad.variant = model::Variant::kProposed;
  CHECK_THROWS_AS(train_model(bad, mc, corpus), std::invalid_argument);
}

TEST_CASE("static-weight mode applies the configured combination") {
  auto corpus = tiny_corpus(8, 44);
  TrainConfig tc = tiny_train(model::Variant::kProposed, 3, 3);
  tc.loss_mode = LossMode::kStatic;
  tc.static_weights = {1.0, 0.5};
  model::ModelConfig mc = tiny_model(model::Variant::kProposed, 3);
  TrainResult r = train_model(tc, mc, corpus);
  for (const TraceRow& row : r.trace) {
    REQUIRE(row.l_mae.has_value());
    CHECK(!row.s_ctc.has_value());
    CHECK(row.l_total == doctest::Approx(row.l_ctc + 0.5 * *row.l_mae).epsilon(1e-12));
  }
}

TEST_CASE("subset training touches only the corpus prefix") {
  auto corpus = tiny_corpus(10, 45);
  TrainConfig tc = tiny_train(model::Variant::kBaseline, 8, 4);
  tc.subset_size = 4;
  tc.batch_size = 4;
  model::ModelConfig mc = tiny_model(model::Variant::kBaseline, 4);
  TrainResult full = train_model(tc, mc, corpus);
  std::vector<synthdata::Utterance> prefix(corpus.begin(), corpus.begin() + 4);
  TrainResult pref = train_model(tc, mc, prefix);
  CHECK(params_equal(full.params, pref.params));
}

TEST_CASE("checkpoint roundtrip preserves every byte of state") {
  auto corpus = tiny_corpus(8, 46);
  TrainConfig tc = tiny_train(model::Variant::kProposed, 4, 5);
  model::ModelConfig mc = tiny_model(model::Variant::kProposed, 5);
  TrainResult r = train_model(tc, mc, corpus);

  Checkpoint ck;
  ck.model_config = mc;
  ck.params = r.params;
  ck.adam = r.adam;
  ck.step = r.final_step;
  ck.seed = tc.seed;

  auto p1 = (tmp_dir() / "ck1.artk").string();
  auto p2 = (tmp_dir() / "ck2.artk").string();
  save_checkpoint(p1, ck);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.version == ck.version);
  CHECK(loaded.step == ck.step);
  CHECK(loaded.seed == ck.seed);
  CHECK(loaded.model_config.d_model == mc.d_model);
  CHECK(loaded.model_config.variant == mc.variant);
  CHECK(params_equal(loaded.params, ck.params));
  CHECK(loaded.adam.t == ck.adam.t);
  CHECK(loaded.adam.m == ck.adam.m);
  CHECK(loaded.adam.v == ck.adam.v);

  save_checkpoint(p2, loaded);
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa.size() > 8);
  CHECK(sa == sb);
}

TEST_CASE("checkpoint rejects corrupt containers") {
  auto corpus = tiny_corpus(4, 47);
  TrainConfig tc = tiny_train(model::Variant::kBaseline, 2, 6);
  model::ModelConfig mc = tiny_model(model::Variant::kBaseline, 6);
  TrainResult r = train_model(tc, mc, corpus);
  Checkpoint ck;
  ck.model_config = mc;
  ck.params = r.params;
  ck.adam = r.adam;
  ck.step = r.final_step;
  ck.seed = tc.seed;

  auto good = (tmp_dir() / "good.artk").string();
  save_checkpoint(good, ck);

  auto bad_magic = (tmp_dir() / "bad_magic.artk").string();
  std::filesystem::copy_file(good, bad_magic,
                             std::filesystem::copy_options::overwrite_existing);
  {
    std::fstream f(bad_magic, std::ios::in | std::ios::out | std::ios::binary);
    f.write("WHAT", 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(bad_magic), doctest::Contains("magic"),
                       std::runtime_error);

  auto truncated = (tmp_dir() / "truncated.artk").string();
  std::filesystem::copy_file(good, truncated,
                             std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(truncated, std::filesystem::file_size(truncated) - 16);
  CHECK_THROWS_AS(load_checkpoint(truncated), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint((tmp_dir() / "missing.artk").string()), std::runtime_error);
}

TEST_CASE("resumed training is exactly the uninterrupted run") {
  auto corpus = tiny_corpus(10, 48);
  model::ModelConfig mc = tiny_model(model::Variant::kProposed, 7);

  TrainConfig full_cfg = tiny_train(model::Variant::kProposed, 10, 7);
  TrainResult full = train_model(full_cfg, mc, corpus);

  TrainConfig half_cfg = tiny_train(model::Variant::kProposed, 5, 7);
  TrainResult half = train_model(half_cfg, mc, corpus);
  Checkpoint mid;
  mid.model_config = mc;
  mid.params = half.params;
  mid.adam = half.adam;
  mid.step = half.final_step;
  mid.seed = half_cfg.seed;
  auto path = (tmp_dir() / "mid.artk").string();
  save_checkpoint(path, mid);
  Checkpoint loaded = load_checkpoint(path);

  // `steps` is the total step count, so the resumed run continues 5 -> 10
  TrainConfig rest_cfg = tiny_train(model::Variant::kProposed, 10, 7);
  TrainResult rest = train_model(rest_cfg, mc, corpus, &loaded);
  CHECK(rest.final_step == 10);
  CHECK(params_equal(full.params, rest.params));
  CHECK(full.adam.m == rest.adam.m);
  CHECK(full.adam.v == rest.adam.v);
  CHECK(full.adam.t == rest.adam.t);
}

TEST_CASE("evaluation is read-only and reports the configured decode modes") {
  auto corpus = tiny_corpus(6, 49);
  TrainConfig tc = tiny_train(model::Variant::kProposed, 4, 8);
  model::ModelConfig mc = tiny_model(model::Variant::kProposed, 8);
  TrainResult r = train_model(tc, mc, corpus);
  model::ModelParams before = r.params;

  decode::DecodeConfig dc;
  dc.beam_width = 4;
  dc.blank = model::blank_index(mc);

  EvalReport no_lm = evaluate(r.params, mc, corpus, dc, nullptr, "train", 8, 6);
  CHECK(params_equal(before, r.params));
  CHECK(no_lm.wer_nolm >= 0.0);
  CHECK(no_lm.cer_nolm >= 0.0);
  CHECK(!no_lm.wer_lm.has_value());
  REQUIRE(no_lm.mean_ppmc.has_value());
  CHECK(std::abs(*no_lm.mean_ppmc) <= 1.0 + 1e-12);

  std::vector<std::string> texts;
  for (const auto& u : corpus) texts.push_back(u.transcript);
  decode::NGramModel lm = decode::train_ngram(texts, 2, 0.5);
  EvalReport with_lm = evaluate(r.params, mc, corpus, dc, &lm, "train", 8, 6);
  REQUIRE(with_lm.wer_lm.has_value());
  CHECK(*with_lm.wer_lm >= 0.0);
  CHECK(with_lm.wer_nolm == no_lm.wer_nolm);

  nlohmann::json j = with_lm.to_json();
  CHECK(j.at("corpus_id") == "train");
  CHECK(j.at("variant") == "proposed");
  CHECK(j.at("wer_nolm").is_number());
  CHECK(j.at("wer_lm").is_number());
  CHECK(j.at("ppmc").is_object());
  CHECK(j.at("decode").at("lm_order") == 2);

  // pooled word error rate equals total edits over total reference words
  // (cross-check against a direct per-utterance tally)
  {
    metrics::EditCounts pooled;
    for (const auto& u : corpus) {
      diff::Tape tape;
      std::vector<bool> mask(u.features.rows(), true);
      auto out = model::forward(tape, mc, r.params, u.features, mask, false);
      std::string hyp = decode::ids_to_text(
          decode::greedy_decode(tape.value(out.log_probs), dc.blank), synthdata::alphabet());
      auto counts = metrics::edit_distance(metrics::tokenize_words(u.transcript),
                                           metrics::tokenize_words(hyp));
      pooled.substitutions += counts.substitutions;
      pooled.deletions += counts.deletions;
      pooled.insertions += counts.insertions;
      pooled.ref_len += counts.ref_len;
    }
    CHECK(no_lm.wer_nolm ==
          doctest::Approx(static_cast<double>(pooled.total()) / pooled.ref_len)
              .epsilon(1e-12));
  }

  // baseline reports no TV correlation
  TrainConfig tb = tiny_train(model::Variant::kBaseline, 2, 8);
  model::ModelConfig mb = tiny_model(model::Variant::kBaseline, 8);
  TrainResult rb = train_model(tb, mb, corpus);
  EvalReport base = evaluate(rb.params, mb, corpus, dc, nullptr, "train", 8, 6);
  CHECK(!base.mean_ppmc.has_value());
}

TEST_CASE("training configuration validation") {
  TrainConfig t = tiny_train(model::Variant::kProposed, 0, 1);
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t = tiny_train(model::Variant::kProposed, 5, 1);
  t.batch_size = 0;
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t = tiny_train(model::Variant::kProposed, 5, 1);
  t.lr = 0.0;
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t = tiny_train(model::Variant::kProposed, 5, 1);
  t.grad_clip = -1.0;
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
}
