#include "artic/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "artic/metrics.hpp"
#include "artic/synthdata.hpp"

namespace artic::harness {

namespace {

using nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace

void validate(const SweepSpec& spec) {
  if (spec.sizes.empty() || spec.variants.empty() || spec.seeds.empty()) {
    throw std::invalid_argument("sweep spec: sizes, variants, and seeds must be non-empty");
  }
  for (size_t i = 1; i < spec.sizes.size(); ++i) {
    if (spec.sizes[i] <= spec.sizes[i - 1]) {
      throw std::invalid_argument("sweep spec: subset sizes must be strictly ascending");
    }
  }
  for (int s : spec.sizes) {
    if (s < 1) throw std::invalid_argument("sweep spec: subset sizes must be positive");
  }
}

json SweepRow::to_json() const {
  json j;
  j["size"] = size;
  j["variant"] = variant;
  j["seed"] = seed;
  j["clean_wer_nolm"] = clean_wer_nolm;
  j["noisy_wer_nolm"] = noisy_wer_nolm;
  j["clean_wer_lm"] = clean_wer_lm ? json(*clean_wer_lm) : json(nullptr);
  j["noisy_wer_lm"] = noisy_wer_lm ? json(*noisy_wer_lm) : json(nullptr);
  j["clean_cer_nolm"] = clean_cer_nolm;
  j["clean_mean_ppmc"] = clean_mean_ppmc ? json(*clean_mean_ppmc) : json(nullptr);
  return j;
}

SweepRow SweepRow::from_json(const json& j) {
  SweepRow r;
  r.size = j.at("size").get<int>();
  r.variant = j.at("variant").get<std::string>();
  r.seed = j.at("seed").get<int>();
  r.clean_wer_nolm = j.at("clean_wer_nolm").get<double>();
  r.noisy_wer_nolm = j.at("noisy_wer_nolm").get<double>();
  if (!j.at("clean_wer_lm").is_null()) r.clean_wer_lm = j.at("clean_wer_lm").get<double>();
  if (!j.at("noisy_wer_lm").is_null()) r.noisy_wer_lm = j.at("noisy_wer_lm").get<double>();
  r.clean_cer_nolm = j.at("clean_cer_nolm").get<double>();
  if (!j.at("clean_mean_ppmc").is_null()) {
    r.clean_mean_ppmc = j.at("clean_mean_ppmc").get<double>();
  }
  return r;
}

std::vector<SweepRow> sweep(const SweepSpec& spec, const SweepSettings& settings,
                            const SweepPaths& paths) {
  validate(spec);
  synthdata::LoadedCorpus train_c = synthdata::read_corpus(paths.train_stem);
  synthdata::LoadedCorpus clean = synthdata::read_corpus(paths.eval_clean_stem);
  synthdata::LoadedCorpus noisy = synthdata::read_corpus(paths.eval_noisy_stem);

  std::vector<SweepRow> rows;
  for (int size : spec.sizes) {
    if (size > static_cast<int>(train_c.utterances.size())) {
      throw std::runtime_error("sweep: subset size " + std::to_string(size) +
                               " exceeds the training corpus (" +
                               std::to_string(train_c.utterances.size()) + " utterances)");
    }
    std::vector<std::string> texts;
    texts.reserve(static_cast<size_t>(size));
    for (int i = 0; i < size; ++i) {
      texts.push_back(train_c.utterances[static_cast<size_t>(i)].transcript);
    }
    decode::NGramModel lm = decode::train_ngram(texts, settings.lm_order, settings.lm_k);

    for (model::Variant variant : spec.variants) {
      for (int seed : spec.seeds) {
        std::string where = "sweep cell (size=" + std::to_string(size) +
                            ", variant=" + model::variant_name(variant) +
                            ", seed=" + std::to_string(seed) + ")";
        try {
          train::TrainConfig tcfg;
          tcfg.lr = settings.lr;
          tcfg.steps = settings.steps;
          tcfg.batch_size = settings.batch_size;
          tcfg.grad_clip = settings.grad_clip;
          tcfg.seed = seed;
          tcfg.loss_mode = settings.loss_mode;
          tcfg.variant = variant;
          tcfg.subset_size = size;

          model::ModelConfig mcfg;
          mcfg.d_model = settings.d_model;
          mcfg.n_layers = settings.n_layers;
          mcfg.n_heads = settings.n_heads;
          mcfg.d_ff = settings.d_ff;
          mcfg.feature_dim = train_c.feature_dim;
          mcfg.vocab_size = synthdata::kVocabSize;
          mcfg.variant = variant;
          mcfg.max_len = settings.max_len;
          mcfg.seed = seed;

          train::TrainResult res = train::train_model(tcfg, mcfg, train_c.utterances);

          decode::DecodeConfig dcfg;
          dcfg.beam_width = settings.beam_width;
          dcfg.alpha = settings.alpha;
          dcfg.beta = settings.beta;
          dcfg.blank = model::blank_index(mcfg);
          const decode::NGramModel* lm_ptr = spec.with_lm ? &lm : nullptr;

          train::EvalReport rx = train::evaluate(res.params, mcfg, clean.utterances, dcfg,
                                                 lm_ptr, "clean", seed, size);
          train::EvalReport ry = train::evaluate(res.params, mcfg, noisy.utterances, dcfg,
                                                 lm_ptr, "noisy", seed, size);

          SweepRow row;
          row.size = size;
          row.variant = model::variant_name(variant);
          row.seed = seed;
          row.clean_wer_nolm = rx.wer_nolm;
          row.noisy_wer_nolm = ry.wer_nolm;
          row.clean_wer_lm = rx.wer_lm;
          row.noisy_wer_lm = ry.wer_lm;
          row.clean_cer_nolm = rx.cer_nolm;
          row.clean_mean_ppmc = rx.mean_ppmc;
          rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          throw std::runtime_error(where + " failed: " + e.what());
        }
      }
    }
  }
  return rows;
}

namespace {

struct CellStats {
  double mean = 0.0;
  double sd = 0.0;
};

CellStats stats_over(const std::vector<double>& xs) {
  CellStats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

std::string emit_report(const std::vector<SweepRow>& rows, const SweepSpec& spec) {
  validate(spec);
  std::map<std::tuple<int, std::string, int>, const SweepRow*> index;
  for (const SweepRow& r : rows) {
    index[{r.size, r.variant, r.seed}] = &r;
  }
  std::vector<std::string> missing;
  for (int size : spec.sizes) {
    for (model::Variant v : spec.variants) {
      for (int seed : spec.seeds) {
        if (!index.count({size, model::variant_name(v), seed})) {
          missing.push_back("(size=" + std::to_string(size) +
                            ", variant=" + model::variant_name(v) +
                            ", seed=" + std::to_string(seed) + ")");
        }
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (size_t i = 0; i < missing.size(); ++i) {
      if (i) list += ", ";
      list += missing[i];
    }
    throw std::invalid_argument("emit_report: missing sweep cells: " + list);
  }

  auto collect = [&](int size, model::Variant v, bool noisy, bool lm_mode,
                     std::vector<double>& out) -> bool {
    for (int seed : spec.seeds) {
      const SweepRow* r = index.at({size, model::variant_name(v), seed});
      if (lm_mode) {
        const std::optional<double>& w = noisy ? r->noisy_wer_lm : r->clean_wer_lm;
        if (!w) return false;
        out.push_back(*w);
      } else {
        out.push_back(noisy ? r->noisy_wer_nolm : r->clean_wer_nolm);
      }
    }
    return true;
  };

  std::ostringstream md;
  md << "# Data-efficiency comparison\n\n";
  md << "Subset sizes are utterance counts standing in for duration budgets\n";
  md << "(50 = smallest, mirroring a 10-minute budget; 200 mirrors 1 hour; 1000 mirrors 10\n";
  md << "hours). Cells show corpus WER as \"no LM / LM\", mean" << (char)0xC2 << (char)0xB1
     << "sd over seeds [" << join_ints(spec.seeds) << "].\n\n";

  md << "| Utterances |";
  for (const char* cond : {"clean", "noisy"}) {
    for (model::Variant v : spec.variants) {
      md << ' ' << cond << ' ' << model::variant_name(v) << " |";
    }
  }
  bool both = spec.variants.size() == 2;
  if (both) md << " rel. improvement (clean, no LM) |";
  md << "\n|---:|";
  for (size_t i = 0; i < 2 * spec.variants.size(); ++i) md << "---|";
  if (both) md << "---:|";
  md << "\n";

  for (int size : spec.sizes) {
    md << "| " << size << " |";
    for (bool noisy : {false, true}) {
      for (model::Variant v : spec.variants) {
        std::vector<double> nolm, lmv;
        collect(size, v, noisy, false, nolm);
        CellStats a = stats_over(nolm);
        std::string cell = fmt("%.4f", a.mean) + (char)0xC2 + (char)0xB1 + fmt("%.4f", a.sd);
        if (spec.with_lm && collect(size, v, noisy, true, lmv)) {
          CellStats b = stats_over(lmv);
          cell += " / " + fmt("%.4f", b.mean) + (char)0xC2 + (char)0xB1 + fmt("%.4f", b.sd);
        } else {
          cell += " / -";
        }
        md << ' ' << cell << " |";
      }
    }
    if (both) {
      std::vector<double> base, prop;
      collect(size, spec.variants[0], false, false, base);
      collect(size, spec.variants[1], false, false, prop);
      double bm = stats_over(base).mean;
      double pm = stats_over(prop).mean;
      if (bm > 0.0) {
        md << ' ' << fmt("%.1f", (bm - pm) / bm * 100.0) << "% |";
      } else {
        md << " - |";
      }
    }
    md << "\n";
  }
  return md.str();
}

void write_results_jsonl(const std::vector<SweepRow>& rows, const std::string& path) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_results_jsonl: cannot open " + path);
  for (const SweepRow& r : rows) out << r.to_json().dump() << "\n";
  if (!out.good()) throw std::runtime_error("write_results_jsonl: write failed for " + path);
}

std::vector<SweepRow> read_results_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_results_jsonl: cannot open " + path);
  std::vector<SweepRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(SweepRow::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error("read_results_jsonl: bad line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (rows.empty()) throw std::runtime_error("read_results_jsonl: no rows in " + path);
  return rows;
}

// ---------------------------------------------------------------------------
// command line front end
// ---------------------------------------------------------------------------

namespace {

std::string normalize_stem(std::string stem) {
  if (!stem.empty() && stem.back() == '/') stem += "corpus";
  return stem;
}

struct ModelDimFlags {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 512;
};

void add_model_flags(CLI::App* sub, ModelDimFlags& dims) {
  sub->add_option("--d-model", dims.d_model, "Embedding width");
  sub->add_option("--n-layers", dims.n_layers, "Encoder self-attention blocks");
  sub->add_option("--n-heads", dims.n_heads, "Attention heads");
  sub->add_option("--d-ff", dims.d_ff, "Feed-forward inner width");
  sub->add_option("--max-len", dims.max_len, "Positional table size");
}

model::ModelConfig make_model_config(const ModelDimFlags& dims, int feature_dim,
                                     model::Variant variant, int seed) {
  model::ModelConfig mcfg;
  mcfg.d_model = dims.d_model;
  mcfg.n_layers = dims.n_layers;
  mcfg.n_heads = dims.n_heads;
  mcfg.d_ff = dims.d_ff;
  mcfg.feature_dim = feature_dim;
  mcfg.vocab_size = synthdata::kVocabSize;
  mcfg.variant = variant;
  mcfg.max_len = dims.max_len;
  mcfg.seed = seed;
  return mcfg;
}

struct DecodeFlags {
  int beam_width = 16;
  double alpha = 0.5;
  double beta = 1.0;
};

void add_decode_flags(CLI::App* sub, DecodeFlags& f) {
  sub->add_option("--beam-width", f.beam_width, "Beam width");
  sub->add_option("--alpha", f.alpha, "LM weight for shallow fusion");
  sub->add_option("--beta", f.beta, "Per-symbol length bonus");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Config precedence: flags > config file > defaults. A config file is a flat
// key=value text file whose keys are long flag names without the dashes
// ("min-words=1"). Keys already given as flags are skipped, the rest are
// appended as "--key=value" tokens before parsing.
std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw std::runtime_error("--config needs a file path");
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(std::string("--config=").size());
      break;
    }
  }
  if (path.empty()) return args;

  std::set<std::string> given;
  for (const std::string& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(0, a.find('=')));
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config file " + path + " line " + std::to_string(lineno) +
                               ": expected key=value");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config file " + path + " line " + std::to_string(lineno) +
                               ": empty key");
    }
    if (given.count("--" + key)) continue;  // explicit flag wins
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Articulation-informed ASR: synthetic corpus, training, decoding, experiments"};
  app.require_subcommand(1);
  std::string config_sink;

  // gen-data -----------------------------------------------------------
  synthdata::CorpusConfig gen_cfg;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic articulatory corpus");
  gen->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  gen->add_option("--n", gen_cfg.n_utterances, "Number of utterances")->required();
  gen->add_option("--seed", gen_cfg.seed, "Corpus seed");
  gen->add_option("--out", gen_out, "Output stem (writes <stem>.jsonl and <stem>.artc)")
      ->required();
  gen->add_option("--min-words", gen_cfg.min_words, "Words per utterance, lower bound");
  gen->add_option("--max-words", gen_cfg.max_words, "Words per utterance, upper bound");
  gen->add_option("--acoustic-noise-sd", gen_cfg.acoustic_noise_sd, "Feature noise sd");
  gen->add_option("--tv-jitter-sd", gen_cfg.tv_jitter_sd, "TV jitter sd");
  gen->add_option("--feature-dim", gen_cfg.feature_dim, "Acoustic frame width");
  gen->add_option("--distractor-dims", gen_cfg.distractor_dims,
                  "Feature dims independent of the TVs");
  gen->add_option("--start-index", gen_cfg.start_index,
                  "First utterance index in the seed stream (for disjoint eval sets)");
  gen->add_option("--noise-scale", gen_cfg.noise_scale, "Multiplier on both noise sds");

  // train --------------------------------------------------------------
  std::string tr_data, tr_out, tr_variant = "proposed", tr_loss = "ubw", tr_trace, tr_resume;
  train::TrainConfig tr_cfg;
  ModelDimFlags tr_dims;
  CLI::App* tr = app.add_subcommand("train", "Train a model on a generated corpus");
  tr->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  tr->add_option("--data", tr_data, "Corpus stem")->required();
  tr->add_option("--out", tr_out, "Checkpoint output path")->required();
  tr->add_option("--variant", tr_variant, "baseline | proposed")
      ->check(CLI::IsMember({"baseline", "proposed"}));
  tr->add_option("--loss", tr_loss, "static | ubw (proposed variant only)")
      ->check(CLI::IsMember({"static", "ubw"}));
  tr->add_option("--lr", tr_cfg.lr, "Learning rate");
  tr->add_option("--steps", tr_cfg.steps, "Optimization steps");
  tr->add_option("--batch-size", tr_cfg.batch_size, "Utterances per step");
  tr->add_option("--grad-clip", tr_cfg.grad_clip, "Global L2 gradient clip");
  tr->add_option("--seed", tr_cfg.seed, "Training seed");
  tr->add_option("--subset-size", tr_cfg.subset_size, "Train on the first N utterances only");
  tr->add_option("--eval-every", tr_cfg.eval_every, "Informational cadence hint");
  tr->add_option("--alpha-ctc", tr_cfg.static_weights.alpha_ctc, "Static CTC weight");
  tr->add_option("--alpha-mae", tr_cfg.static_weights.alpha_mae, "Static MAE weight");
  tr->add_option("--trace", tr_trace, "Write per-step loss trace CSV here");
  tr->add_option("--resume", tr_resume,
                 "Continue from this checkpoint (model dims come from it)");
  add_model_flags(tr, tr_dims);

  // eval ----------------------------------------------------------------
  std::string ev_ckpt, ev_data, ev_lm, ev_report;
  DecodeFlags ev_dec;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  ev->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Corpus stem")->required();
  ev->add_option("--lm", ev_lm, "Optional n-gram LM path (enables beam search)");
  ev->add_option("--report", ev_report, "Write the JSON report here");
  add_decode_flags(ev, ev_dec);

  // decode --------------------------------------------------------------
  std::string de_ckpt, de_data, de_lm, de_utt;
  DecodeFlags de_dec;
  CLI::App* de = app.add_subcommand("decode", "Print transcriptions for a corpus");
  de->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  de->add_option("--ckpt", de_ckpt, "Checkpoint path")->required();
  de->add_option("--data", de_data, "Corpus stem")->required();
  de->add_option("--lm", de_lm, "Optional n-gram LM path");
  de->add_option("--utt", de_utt, "Decode only this utterance id");
  add_decode_flags(de, de_dec);

  // lm-train --------------------------------------------------------------
  std::string lt_data, lt_out;
  int lt_order = 3;
  double lt_k = 0.5;
  CLI::App* lt = app.add_subcommand("lm-train", "Train a character n-gram LM on a corpus");
  lt->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  lt->add_option("--data", lt_data, "Corpus stem")->required();
  lt->add_option("--out", lt_out, "LM output path")->required();
  lt->add_option("--order", lt_order, "n-gram order (1-5)");
  lt->add_option("--k", lt_k, "Add-k smoothing constant");

  // sweep -----------------------------------------------------------------
  SweepSpec sw_spec;
  SweepSettings sw_set;
  SweepPaths sw_paths;
  std::string sw_out_dir, sw_loss = "ubw";
  std::vector<std::string> sw_variants = {"baseline", "proposed"};
  bool sw_no_lm = false;
  ModelDimFlags sw_dims;
  CLI::App* sw = app.add_subcommand(
      "sweep", "Train/evaluate every (size, variant, seed) cell and render the report");
  sw->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  sw->add_option("--data", sw_paths.train_stem, "Training corpus stem")->required();
  sw->add_option("--eval-clean", sw_paths.eval_clean_stem, "Clean eval corpus stem")->required();
  sw->add_option("--eval-noisy", sw_paths.eval_noisy_stem, "Noisy eval corpus stem")->required();
  sw->add_option("--out-dir", sw_out_dir, "Directory for results.jsonl and report.md")
      ->required();
  sw->add_option("--sizes", sw_spec.sizes, "Subset sizes, ascending")->delimiter(',');
  sw->add_option("--seeds", sw_spec.seeds, "Training seeds")->delimiter(',');
  sw->add_option("--variants", sw_variants, "Variants to run")->delimiter(',');
  sw->add_flag("--no-lm", sw_no_lm, "Skip LM beam-search decoding");
  sw->add_option("--steps", sw_set.steps, "Optimization steps per cell");
  sw->add_option("--batch-size", sw_set.batch_size, "Utterances per step");
  sw->add_option("--lr", sw_set.lr, "Learning rate");
  sw->add_option("--grad-clip", sw_set.grad_clip, "Global L2 gradient clip");
  sw->add_option("--loss", sw_loss, "static | ubw for the proposed variant")
      ->check(CLI::IsMember({"static", "ubw"}));
  sw->add_option("--lm-order", sw_set.lm_order, "n-gram order");
  sw->add_option("--lm-k", sw_set.lm_k, "Add-k smoothing constant");
  sw->add_option("--beam-width", sw_set.beam_width, "Beam width");
  sw->add_option("--alpha", sw_set.alpha, "LM weight");
  sw->add_option("--beta", sw_set.beta, "Length bonus");
  add_model_flags(sw, sw_dims);

  // report ------------------------------------------------------------------
  std::string rp_results, rp_out;
  CLI::App* rp = app.add_subcommand("report", "Re-render the Markdown report from results.jsonl");
  rp->add_option("--config", config_sink, "Flat key=value defaults; flags win");
  rp->add_option("--results", rp_results, "results.jsonl path")->required();
  rp->add_option("--out", rp_out, "Markdown output path")->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config_args(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic + usage hint on stderr
    return 1;
  }

  try {
    if (gen->parsed()) {
      std::string stem = normalize_stem(gen_out);
      ensure_parent_dir(stem + ".jsonl");
      synthdata::Corpus corpus = synthdata::generate_corpus(gen_cfg);
      synthdata::write_corpus(corpus, stem);
      std::cout << "wrote " << gen_cfg.n_utterances << " utterances to " << stem << ".jsonl + "
                << stem << ".artc\n";
      return 0;
    }

    if (tr->parsed()) {
      synthdata::LoadedCorpus data = synthdata::read_corpus(normalize_stem(tr_data));
      tr_cfg.variant = model::variant_from_name(tr_variant);
      tr_cfg.loss_mode = tr_loss == "static" ? train::LossMode::kStatic : train::LossMode::kUbw;

      train::Checkpoint resume;
      const train::Checkpoint* resume_ptr = nullptr;
      model::ModelConfig mcfg;
      if (!tr_resume.empty()) {
        resume = train::load_checkpoint(tr_resume);
        mcfg = resume.model_config;
        if (mcfg.variant != tr_cfg.variant) {
          throw std::runtime_error("train: --variant conflicts with the resume checkpoint");
        }
        resume_ptr = &resume;
      } else {
        mcfg = make_model_config(tr_dims, data.feature_dim, tr_cfg.variant, tr_cfg.seed);
      }

      train::TrainResult res = train::train_model(tr_cfg, mcfg, data.utterances, resume_ptr);

      train::Checkpoint out;
      out.model_config = mcfg;
      out.params = std::move(res.params);
      out.adam = std::move(res.adam);
      out.step = res.final_step;
      out.seed = tr_cfg.seed;
      ensure_parent_dir(tr_out);
      train::save_checkpoint(tr_out, out);
      if (!tr_trace.empty()) {
        ensure_parent_dir(tr_trace);
        train::write_trace_csv(tr_trace, res.trace);
      }
      if (!res.trace.empty()) {
        const train::TraceRow& last = res.trace.back();
        std::cout << "step " << last.step << ": l_ctc " << fmt("%.4f", last.l_ctc);
        if (last.l_mae) std::cout << ", l_mae " << fmt("%.4f", *last.l_mae);
        std::cout << ", l_total " << fmt("%.4f", last.l_total) << "\n";
      }
      std::cout << "saved checkpoint to " << tr_out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      train::Checkpoint ckpt = train::load_checkpoint(ev_ckpt);
      std::string stem = normalize_stem(ev_data);
      synthdata::LoadedCorpus data = synthdata::read_corpus(stem);
      decode::NGramModel lm;
      bool with_lm = !ev_lm.empty();
      if (with_lm) lm = decode::load_ngram(ev_lm);
      decode::DecodeConfig dcfg;
      dcfg.beam_width = ev_dec.beam_width;
      dcfg.alpha = ev_dec.alpha;
      dcfg.beta = ev_dec.beta;
      dcfg.blank = model::blank_index(ckpt.model_config);
      train::EvalReport rep =
          train::evaluate(ckpt.params, ckpt.model_config, data.utterances, dcfg,
                          with_lm ? &lm : nullptr, stem, ckpt.seed,
                          static_cast<int>(data.utterances.size()));
      std::string text = rep.to_json().dump(2);
      std::cout << text << "\n";
      if (!ev_report.empty()) {
        ensure_parent_dir(ev_report);
        std::ofstream out(ev_report, std::ios::binary);
        if (!out) throw std::runtime_error("eval: cannot open " + ev_report);
        out << text << "\n";
      }
      return 0;
    }

    if (de->parsed()) {
      train::Checkpoint ckpt = train::load_checkpoint(de_ckpt);
      synthdata::LoadedCorpus data = synthdata::read_corpus(normalize_stem(de_data));
      decode::NGramModel lm;
      bool with_lm = !de_lm.empty();
      if (with_lm) lm = decode::load_ngram(de_lm);
      decode::DecodeConfig dcfg;
      dcfg.beam_width = de_dec.beam_width;
      dcfg.alpha = de_dec.alpha;
      dcfg.beta = de_dec.beta;
      dcfg.blank = model::blank_index(ckpt.model_config);
      const std::string& abc = synthdata::alphabet();

      bool found = false;
      for (const synthdata::Utterance& u : data.utterances) {
        if (!de_utt.empty() && u.id != de_utt) continue;
        found = true;
        std::vector<bool> mask(static_cast<size_t>(u.features.shape[0]), true);
        diff::Tape tape;
        model::ForwardOutput out = model::forward(tape, ckpt.model_config, ckpt.params,
                                                  u.features, mask, /*trainable=*/false);
        const diff::Tensor& lp = tape.value(out.log_probs);
        std::string greedy =
            decode::ids_to_text(decode::greedy_decode(lp, dcfg.blank), abc);
        std::cout << u.id << "\n  ref:    " << u.transcript << "\n  greedy: " << greedy << "\n";
        if (with_lm) {
          std::vector<decode::BeamHypothesis> hyps = decode::beam_search(lp, abc, &lm, dcfg);
          std::cout << "  beam:   " << hyps.front().prefix << "\n";
        }
      }
      if (!found) throw std::runtime_error("decode: utterance id '" + de_utt + "' not found");
      return 0;
    }

    if (lt->parsed()) {
      synthdata::LoadedCorpus data = synthdata::read_corpus(normalize_stem(lt_data));
      std::vector<std::string> texts;
      texts.reserve(data.utterances.size());
      for (const synthdata::Utterance& u : data.utterances) texts.push_back(u.transcript);
      decode::NGramModel lm = decode::train_ngram(texts, lt_order, lt_k);
      ensure_parent_dir(lt_out);
      decode::save_ngram(lm, lt_out);
      std::cout << "trained order-" << lt_order << " LM on " << texts.size()
                << " transcripts -> " << lt_out << "\n";
      return 0;
    }

    if (sw->parsed()) {
      sw_spec.with_lm = !sw_no_lm;
      sw_spec.variants.clear();
      for (const std::string& v : sw_variants) {
        sw_spec.variants.push_back(model::variant_from_name(v));
      }
      sw_set.loss_mode =
          sw_loss == "static" ? train::LossMode::kStatic : train::LossMode::kUbw;
      sw_set.d_model = sw_dims.d_model;
      sw_set.n_layers = sw_dims.n_layers;
      sw_set.n_heads = sw_dims.n_heads;
      sw_set.d_ff = sw_dims.d_ff;
      sw_set.max_len = sw_dims.max_len;
      sw_paths.train_stem = normalize_stem(sw_paths.train_stem);
      sw_paths.eval_clean_stem = normalize_stem(sw_paths.eval_clean_stem);
      sw_paths.eval_noisy_stem = normalize_stem(sw_paths.eval_noisy_stem);

      std::vector<SweepRow> rows = sweep(sw_spec, sw_set, sw_paths);
      std::string report = emit_report(rows, sw_spec);
      std::filesystem::create_directories(sw_out_dir);
      write_results_jsonl(rows, sw_out_dir + "/results.jsonl");
      std::ofstream out(sw_out_dir + "/report.md", std::ios::binary);
      if (!out) throw std::runtime_error("sweep: cannot open " + sw_out_dir + "/report.md");
      out << report;
      out.close();
      std::cout << report;
      std::cout << "wrote " << sw_out_dir << "/results.jsonl and " << sw_out_dir
                << "/report.md\n";
      return 0;
    }

    if (rp->parsed()) {
      std::vector<SweepRow> rows = read_results_jsonl(rp_results);
      SweepSpec spec;
      spec.sizes.clear();
      spec.seeds.clear();
      spec.variants.clear();
      std::set<int> sizes, seeds;
      std::set<std::string> variants;
      bool any_lm = false;
      for (const SweepRow& r : rows) {
        sizes.insert(r.size);
        seeds.insert(r.seed);
        variants.insert(r.variant);
        any_lm = any_lm || r.clean_wer_lm.has_value();
      }
      spec.sizes.assign(sizes.begin(), sizes.end());
      spec.seeds.assign(seeds.begin(), seeds.end());
      if (variants.count("baseline")) spec.variants.push_back(model::Variant::kBaseline);
      if (variants.count("proposed")) spec.variants.push_back(model::Variant::kProposed);
      spec.with_lm = any_lm;

      std::string report = emit_report(rows, spec);
      ensure_parent_dir(rp_out);
      std::ofstream out(rp_out, std::ios::binary);
      if (!out) throw std::runtime_error("report: cannot open " + rp_out);
      out << report;
      out.close();
      std::cout << report;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace artic::harness
