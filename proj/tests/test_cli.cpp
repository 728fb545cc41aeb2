#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "artic/harness.hpp"
#include "json.hpp"

using namespace artic;
using namespace artic::harness;

namespace {

int run(std::vector<std::string> args) {
  std::vector<const char*> argv;
  argv.push_back("artic");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::filesystem::path work_dir() {
  auto dir = std::filesystem::temp_directory_path() / "artic_cli_tests";
  static bool cleared = [&] {
    std::filesystem::remove_all(dir);  // stale fixtures from older builds
    return true;
  }();
  (void)cleared;
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

// Tiny end-to-end fixture shared by the heavier cases.
struct Fixture {
  std::filesystem::path dir = work_dir();
  std::string data_stem = (dir / "corpus").string();
  std::string ckpt = (dir / "model.ckpt").string();

  Fixture() {
    if (!std::filesystem::exists(data_stem + ".jsonl")) {
      REQUIRE(run({"gen-data", "--n", "6", "--seed", "3", "--out", data_stem, "--min-words",
                   "1", "--max-words", "1"}) == 0);
    }
    if (!std::filesystem::exists(ckpt)) {
      REQUIRE(run({"train", "--data", data_stem, "--out", ckpt, "--steps", "2",
                   "--batch-size", "3", "--d-model", "8", "--n-heads", "2", "--d-ff", "12",
                   "--max-len", "128", "--seed", "1"}) == 0);
    }
  }
};

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run({}) == 1);
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({"gen-data", "--n", "5"}) == 1);             // missing required --out
  CHECK(run({"gen-data", "--n", "5", "--frobnicate"}) == 1);
  CHECK(run({"--help"}) == 0);
  CHECK(run({"gen-data", "--help"}) == 0);
  CHECK(run({"train", "--help"}) == 0);
  CHECK(run({"sweep", "--help"}) == 0);
}

TEST_CASE("data and model errors exit with code 2") {
  auto dir = work_dir();
  CHECK(run({"train", "--data", (dir / "nonexistent").string(), "--out",
             (dir / "x.ckpt").string()}) == 2);
  CHECK(run({"eval", "--ckpt", (dir / "missing.ckpt").string(), "--data",
             (dir / "nonexistent").string()}) == 2);
  CHECK(run({"lm-train", "--data", (dir / "nonexistent").string(), "--out",
             (dir / "x.lm").string()}) == 2);
  // invalid generation parameters are a data error, not a usage error
  CHECK(run({"gen-data", "--n", "2", "--out", (dir / "bad").string(), "--min-words", "4",
             "--max-words", "2"}) == 2);
}

TEST_CASE("gen-data writes the manifest/sidecar pair") {
  auto dir = work_dir();
  std::string stem = (dir / "gen" / "d").string();
  CHECK(run({"gen-data", "--n", "5", "--seed", "7", "--out", stem, "--min-words", "1",
             "--max-words", "1"}) == 0);
  CHECK(std::filesystem::exists(stem + ".jsonl"));
  CHECK(std::filesystem::exists(stem + ".artc"));
  CHECK(count_lines(stem + ".jsonl") == 5);

  // a trailing slash means "directory": the default stem is appended
  std::string dstem = (dir / "gen2").string() + "/";
  CHECK(run({"gen-data", "--n", "2", "--seed", "7", "--out", dstem, "--min-words", "1",
             "--max-words", "1"}) == 0);
  CHECK(std::filesystem::exists(dir / "gen2" / "corpus.jsonl"));
}

TEST_CASE("train emits a loadable versioned checkpoint") {
  Fixture fx;
  std::ifstream in(fx.ckpt, std::ios::binary);
  REQUIRE(in.good());
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "ARTK");
  train::Checkpoint ck = train::load_checkpoint(fx.ckpt);
  CHECK(ck.version == 1);
  CHECK(ck.step == 2);
  CHECK(ck.model_config.d_model == 8);
  CHECK(ck.model_config.variant == model::Variant::kProposed);
}

TEST_CASE("train writes the optional trace") {
  Fixture fx;
  std::string trace = (fx.dir / "trace.csv").string();
  std::string ck2 = (fx.dir / "m2.ckpt").string();
  CHECK(run({"train", "--data", fx.data_stem, "--out", ck2, "--steps", "2", "--batch-size",
             "3", "--d-model", "8", "--n-heads", "2", "--d-ff", "12", "--max-len", "128",
             "--variant", "baseline", "--trace", trace}) == 0);
  std::string body = slurp(trace);
  CHECK(body.rfind("step,l_ctc,l_mae,l_total,s_ctc,s_mae,grad_norm\n", 0) == 0);
  CHECK(count_lines(trace) == 3);  // header + 2 steps
}

TEST_CASE("resume continues from a checkpoint and rejects variant conflicts") {
  Fixture fx;
  std::string ck2 = (fx.dir / "resumed.ckpt").string();
  CHECK(run({"train", "--data", fx.data_stem, "--out", ck2, "--resume", fx.ckpt, "--steps",
             "4"}) == 0);
  CHECK(train::load_checkpoint(ck2).step == 4);
  CHECK(run({"train", "--data", fx.data_stem, "--out", ck2, "--resume", fx.ckpt, "--steps",
             "4", "--variant", "baseline"}) == 2);
}

TEST_CASE("eval writes a machine-readable report") {
  Fixture fx;
  std::string lm = (fx.dir / "corpus.lm").string();
  CHECK(run({"lm-train", "--data", fx.data_stem, "--out", lm, "--order", "2", "--k",
             "0.5"}) == 0);
  std::string report = (fx.dir / "eval.json").string();
  CHECK(run({"eval", "--ckpt", fx.ckpt, "--data", fx.data_stem, "--lm", lm, "--beam-width",
             "4", "--report", report}) == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(report));
  CHECK(j.at("wer_nolm").is_number());
  CHECK(j.at("wer_lm").is_number());
  CHECK(j.at("cer_nolm").is_number());
  CHECK(j.at("mean_ppmc").is_number());
  CHECK(j.at("decode").at("beam_width") == 4);
  CHECK(j.at("decode").at("lm_order") == 2);
}

TEST_CASE("decode prints transcriptions and validates utterance ids") {
  Fixture fx;
  CHECK(run({"decode", "--ckpt", fx.ckpt, "--data", fx.data_stem, "--utt", "utt000001"}) == 0);
  CHECK(run({"decode", "--ckpt", fx.ckpt, "--data", fx.data_stem, "--utt", "nope"}) == 2);
}

TEST_CASE("config files feed defaults that flags override") {
  auto dir = work_dir();
  std::string cfg_path = (dir / "gen.cfg").string();
  std::ofstream(cfg_path) << "n=4\nseed=9\nmin-words=1\nmax-words=1\n";
  std::string stem = (dir / "from_config").string();
  CHECK(run({"gen-data", "--config", cfg_path, "--out", stem}) == 0);
  CHECK(count_lines(stem + ".jsonl") == 4);

  // the flag wins over the config file value
  std::string stem2 = (dir / "from_config2").string();
  CHECK(run({"gen-data", "--config", cfg_path, "--n", "2", "--out", stem2}) == 0);
  CHECK(count_lines(stem2 + ".jsonl") == 2);
}

TEST_CASE("results serialization and report rendering") {
  SweepSpec spec;
  spec.sizes = {4, 8};
  spec.seeds = {1, 2};
  spec.with_lm = true;

  std::vector<SweepRow> rows;
  for (int size : spec.sizes) {
    for (const char* variant : {"baseline", "proposed"}) {
      for (int seed : spec.seeds) {
        SweepRow r;
        r.size = size;
        r.variant = variant;
        r.seed = seed;
        bool prop = std::string(variant) == "proposed";
        r.clean_wer_nolm = prop ? 0.30 : 0.40;
        r.noisy_wer_nolm = r.clean_wer_nolm + 0.2;
        r.clean_wer_lm = r.clean_wer_nolm - 0.05;
        r.noisy_wer_lm = r.noisy_wer_nolm - 0.05;
        r.clean_cer_nolm = r.clean_wer_nolm / 2;
        if (prop) r.clean_mean_ppmc = 0.9;
        rows.push_back(r);
      }
    }
  }

  auto dir = work_dir();
  std::string path = (dir / "results.jsonl").string();
  write_results_jsonl(rows, path);
  std::vector<SweepRow> loaded = read_results_jsonl(path);
  REQUIRE(loaded.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(loaded[i].to_json() == rows[i].to_json());
  }

  std::string report = emit_report(rows, spec);
  CHECK(report == emit_report(rows, spec));  // pure: byte-identical
  CHECK(report.find("| 4 |") != std::string::npos);
  CHECK(report.find("| 8 |") != std::string::npos);
  CHECK(report.find("0.4000") != std::string::npos);
  CHECK(report.find("0.3000") != std::string::npos);
  // relative improvement of baseline 0.40 vs proposed 0.30
  CHECK(report.find("25.0%") != std::string::npos);
  // 2 data rows x (2 conditions x 2 variants) "noLM / LM" pair cells
  int pair_cells = 0;
  std::istringstream lines(report);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("| 4 |", 0) != 0 && line.rfind("| 8 |", 0) != 0) continue;
    for (size_t pos = line.find(" / "); pos != std::string::npos;
         pos = line.find(" / ", pos + 1)) {
      ++pair_cells;
    }
  }
  CHECK(pair_cells == 8);

  std::vector<SweepRow> incomplete(rows.begin(), rows.end() - 1);
  CHECK_THROWS_WITH_AS(emit_report(incomplete, spec), doctest::Contains("seed=2"),
                       std::invalid_argument);
  CHECK_THROWS_AS(emit_report({}, spec), std::invalid_argument);

  SweepSpec bad = spec;
  bad.sizes = {8, 4};
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad.sizes.clear();
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  // the report subcommand re-renders the same table from disk
  std::string md_path = (dir / "report.md").string();
  std::vector<std::string> args = {"report", "--results", path, "--out", md_path};
  std::vector<const char*> argv = {"artic"};
  for (const auto& a : args) argv.push_back(a.c_str());
  CHECK(run_cli(static_cast<int>(argv.size()), argv.data()) == 0);
  CHECK(slurp(md_path) == report);
}

TEST_CASE("tiny sweep runs end to end, deterministically") {
  auto dir = work_dir() / "sweep";
  std::filesystem::create_directories(dir);
  std::string train_stem = (dir / "train").string();
  std::string clean_stem = (dir / "clean").string();
  std::string noisy_stem = (dir / "noisy").string();
  REQUIRE(run({"gen-data", "--n", "4", "--seed", "5", "--out", train_stem, "--min-words", "1",
               "--max-words", "1"}) == 0);
  REQUIRE(run({"gen-data", "--n", "2", "--seed", "5", "--start-index", "1000", "--out",
               clean_stem, "--min-words", "1", "--max-words", "1"}) == 0);
  REQUIRE(run({"gen-data", "--n", "2", "--seed", "5", "--start-index", "2000", "--noise-scale",
               "2.0", "--out", noisy_stem, "--min-words", "1", "--max-words", "1"}) == 0);

  auto run_sweep = [&](const std::string& out_dir) {
    return run({"sweep", "--data", train_stem, "--eval-clean", clean_stem, "--eval-noisy",
                noisy_stem, "--out-dir", out_dir, "--sizes", "4", "--seeds", "1", "--steps",
                "2", "--batch-size", "2", "--d-model", "8", "--n-heads", "2", "--d-ff", "12",
                "--max-len", "128", "--lm-order", "2", "--beam-width", "4"});
  };
  std::string out1 = (dir / "out1").string();
  std::string out2 = (dir / "out2").string();
  REQUIRE(run_sweep(out1) == 0);
  REQUIRE(run_sweep(out2) == 0);
  CHECK(std::filesystem::exists(out1 + "/results.jsonl"));
  CHECK(std::filesystem::exists(out1 + "/report.md"));
  CHECK(slurp(out1 + "/report.md") == slurp(out2 + "/report.md"));
  CHECK(slurp(out1 + "/results.jsonl") == slurp(out2 + "/results.jsonl"));

  // 1 size x 2 variants x 1 seed -> 2 rows
  CHECK(count_lines(out1 + "/results.jsonl") == 2);

  CHECK(run({"sweep", "--data", (dir / "missing").string(), "--eval-clean", clean_stem,
             "--eval-noisy", noisy_stem, "--out-dir", (dir / "out3").string(), "--sizes", "4",
             "--seeds", "1", "--steps", "1"}) == 2);
}
