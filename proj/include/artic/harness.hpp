#pragma once

#include <optional>
#include <string>
#include <vector>

#include "artic/decode.hpp"
#include "artic/model.hpp"
#include "artic/train.hpp"
#include "json.hpp"

namespace artic::harness {

struct SweepSpec {
  std::vector<int> sizes{50, 200, 1000};  // utterance budgets, ascending
  std::vector<model::Variant> variants{model::Variant::kBaseline, model::Variant::kProposed};
  std::vector<int> seeds{1, 2, 3};
  bool with_lm = true;  // decode with the corpus-trained LM in addition to greedy
};

void validate(const SweepSpec& spec);

// Shared per-cell settings: optimizer, model dimensions, LM, decoding.
struct SweepSettings {
  int steps = 2000;
  int batch_size = 8;
  double lr = 3e-4;
  double grad_clip = 5.0;
  train::LossMode loss_mode = train::LossMode::kUbw;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 512;
  int lm_order = 3;
  double lm_k = 0.5;
  int beam_width = 16;
  double alpha = 0.5;
  double beta = 1.0;
};

struct SweepPaths {
  std::string train_stem;
  std::string eval_clean_stem;
  std::string eval_noisy_stem;
};

// One training run's evaluation outcomes on both eval conditions.
struct SweepRow {
  int size = 0;
  std::string variant;
  int seed = 0;
  double clean_wer_nolm = 0.0;
  double noisy_wer_nolm = 0.0;
  std::optional<double> clean_wer_lm;
  std::optional<double> noisy_wer_lm;
  double clean_cer_nolm = 0.0;
  std::optional<double> clean_mean_ppmc;

  nlohmann::json to_json() const;
  static SweepRow from_json(const nlohmann::json& j);
};

// Train/evaluate every (size, variant, seed) cell. A failing cell aborts with
// its coordinates in the error text.
std::vector<SweepRow> sweep(const SweepSpec& spec, const SweepSettings& settings,
                            const SweepPaths& paths);

// Markdown summary shaped like the data-efficiency comparison: one row per
// subset size, clean/noisy x baseline/proposed cells as "noLM / LM"
// mean±sd over seeds, plus a relative-improvement column. Pure function of
// its inputs; incomplete cell sets are an error listing the missing cells.
std::string emit_report(const std::vector<SweepRow>& rows, const SweepSpec& spec);

void write_results_jsonl(const std::vector<SweepRow>& rows, const std::string& path);
std::vector<SweepRow> read_results_jsonl(const std::string& path);

// Full command-line front end; returns the process exit code
// (0 success, 1 usage error, 2 data/model error).
int run_cli(int argc, const char* const* argv);

}  // namespace artic::harness
