#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "aai/cli.hpp"
#include "aai/errors.hpp"
#include "aai/report.hpp"
#include "aai/train.hpp"
#include "aai/wave.hpp"

using namespace aai;
namespace fs = std::filesystem;

namespace {

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Tiny but complete run configuration for pipeline tests.
RunConfig tiny_config(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.stride_train = 8;
  cfg.corpus.count = 12;
  cfg.corpus.seed = 21;
  cfg.corpus.region_s_min = 0.15;
  cfg.corpus.region_s_max = 0.25;
  cfg.train.seed = 21;
  cfg.train.batch = 32;
  cfg.train.prior_steps = 120;
  cfg.train.aai_steps = 150;
  cfg.train.k_inner = 2;
  cfg.train.val_interval = 50;
  cfg.train.patience = 0;
  cfg.train.latent_dim = 8;
  cfg.train.encoder_hidden = {48, 24};
  cfg.train.disc_hidden = {16};
  cfg.train.val_max_frames = 256;
  cfg.out_dir = (root / "run").string();
  return cfg;
}

struct Pipeline {
  fs::path root, data, run;
  RunConfig cfg;
  fs::path checkpoint;
};

// Shared tiny pipeline (synth + train once for the whole binary).
const Pipeline& pipeline() {
  static Pipeline p = [] {
    Pipeline pl;
    pl.root = fs::temp_directory_path() / "aai_cli_pipeline";
    fs::remove_all(pl.root);
    fs::create_directories(pl.root);
    pl.data = pl.root / "data";
    pl.cfg = tiny_config(pl.root);
    pl.cfg.out_dir = pl.data.string();
    cli::run_synth(pl.cfg);
    pl.cfg.manifest = (pl.data / "manifest.csv").string();
    pl.run = pl.root / "run";
    pl.cfg.out_dir = pl.run.string();
    pl.checkpoint = cli::run_train(pl.cfg);
    pl.cfg.checkpoint = pl.checkpoint.string();
    return pl;
  }();
  return p;
}

}  // namespace

TEST_CASE("synth writes a loadable corpus") {
  const auto& p = pipeline();
  const DatasetManifest m = load_manifest(p.data / "manifest.csv");
  CHECK(m.entries.size() == 12);
}

TEST_CASE("train leaves a checkpoint and monotone logs") {
  const auto& p = pipeline();
  CHECK(fs::exists(p.checkpoint));
  const TrainLog log = TrainLog::load_csv(p.run / "train_log.csv");
  REQUIRE(!log.rows.empty());
  for (std::size_t i = 1; i < log.rows.size(); ++i)
    CHECK(log.rows[i].step > log.rows[i - 1].step);
  CHECK(fs::exists(p.run / "prior_log.csv"));
}

TEST_CASE("infer is deterministic and length-preserving") {
  const auto& p = pipeline();
  const DatasetManifest m = load_manifest(p.data / "manifest.csv");
  std::string speech_path;
  for (const auto& e : m.entries)
    if (e.split == "test") speech_path = m.speech_file(e).string();
  REQUIRE(!speech_path.empty());

  const auto out1 = p.root / "est1.wav";
  const auto out2 = p.root / "est2.wav";
  cli::run_infer(p.cfg, speech_path, out1.string());
  cli::run_infer(p.cfg, speech_path, out2.string());
  CHECK(read_bytes(out1) == read_bytes(out2));

  const Waveform in = read_wav(speech_path);
  const Waveform out = read_wav(out1);
  CHECK(out.samples.size() == in.samples.size());
}

TEST_CASE("eval produces per-condition reports, table and plots") {
  const auto& p = pipeline();
  RunConfig cfg = p.cfg;
  cfg.out_dir = (p.root / "eval").string();
  cfg.sweep = parse_sweep("white:0,10");
  cfg.self_test = true;
  const fs::path result_path = cli::run_eval(cfg);

  const ExperimentResult result = load_result(result_path);
  REQUIRE(result.reports.size() == 4);  // clean + 2 white + selftest
  CHECK(result.reports[0].first == "clean");
  CHECK(result.reports[1].first == "white@0dB");
  CHECK(result.reports[2].first == "white@10dB");

  for (const auto& [name, r] : result.reports) {
    CHECK(std::abs(r.gci.idr + r.gci.mr + r.gci.far - 100.0) < 1e-6);
    CHECK(r.gci.cycles > 0);
  }

  const auto& selftest = result.reports.back();
  CHECK(selftest.first == "selftest-reference");
  CHECK(selftest.second.gci.idr == doctest::Approx(100.0));
  CHECK(selftest.second.gci.mr == doctest::Approx(0.0));
  CHECK(selftest.second.gci.far == doctest::Approx(0.0));
  CHECK(selftest.second.goi.idr == doctest::Approx(100.0));

  CHECK(fs::exists(p.root / "eval" / "table.txt"));
  CHECK(fs::exists(p.root / "eval" / "plots" / "plot_gci_idr.svg"));
}

TEST_CASE("eval with an empty sweep yields exactly one clean report") {
  const auto& p = pipeline();
  RunConfig cfg = p.cfg;
  cfg.out_dir = (p.root / "eval_clean").string();
  cfg.sweep.clear();
  cfg.self_test = false;
  const ExperimentResult result = load_result(cli::run_eval(cfg));
  REQUIRE(result.reports.size() == 1);
  CHECK(result.reports[0].first == "clean");
}

TEST_CASE("report re-renders from the result file alone") {
  const auto& p = pipeline();
  RunConfig cfg;
  cfg.out_dir = (p.root / "rerender").string();
  cli::run_report(cfg, (p.root / "eval" / "result.json").string());
  CHECK(fs::exists(p.root / "rerender" / "table.txt"));
  CHECK(fs::exists(p.root / "rerender" / "plots" / "plot_gci_idr.svg"));
}

TEST_CASE("re-running eval with identical inputs reproduces the result bit-for-bit") {
  const auto& p = pipeline();
  RunConfig cfg = p.cfg;
  cfg.sweep = parse_sweep("white:5");
  cfg.out_dir = (p.root / "eval_rep").string();
  cli::run_eval(cfg);
  const auto first = read_bytes(p.root / "eval_rep" / "result.json");
  cli::run_eval(cfg);
  CHECK(read_bytes(p.root / "eval_rep" / "result.json") == first);
}

TEST_CASE("metrics report JSON carries the documented keys") {
  const auto& p = pipeline();
  const auto path = p.root / "eval" / "result.json";
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  REQUIRE(j.contains("config"));
  REQUIRE(j.contains("reports"));
  const auto& clean = j.at("reports").at("clean");
  for (const char* key : {"dataset", "gci", "goi", "cq", "oq", "sq", "hnr", "skipped_cycles"})
    CHECK(clean.contains(key));
  for (const char* key : {"idr", "mr", "far", "ida_ms"}) {
    CHECK(clean.at("gci").contains(key));
    CHECK(clean.at("goi").contains(key));
  }
  for (const char* metric : {"cq", "oq", "sq", "hnr"}) {
    CHECK(clean.at(metric).contains("true"));
    CHECK(clean.at(metric).contains("est"));
  }
}

TEST_CASE("config file loads and nested keys apply") {
  const auto dir = fs::temp_directory_path() / "aai_cli_cfg";
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({
    "seed": 321,
    "train": {"aai_steps": 7, "loss": "l2", "k_inner": 4},
    "corpus": {"count": 3},
    "sweep": "white:0,5;babble:10"
  })";
  const RunConfig cfg = load_config(dir / "cfg.json");
  CHECK(cfg.seed == 321);
  CHECK(cfg.train.seed == 321);
  CHECK(cfg.train.aai_steps == 7);
  CHECK(cfg.train.recon == TrainConfig::Recon::L2);
  CHECK(cfg.train.k_inner == 4);
  CHECK(cfg.corpus.count == 3);
  REQUIRE(cfg.sweep.size() == 3);
  CHECK(cfg.sweep[2].kind == NoiseSpec::Kind::Babble);
  CHECK(condition_name(cfg.sweep[1]) == "white@5dB");

  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
}

#ifdef AAI_BINARY
TEST_CASE("the binary maps error classes to the documented exit codes") {
  const std::string bin = AAI_BINARY;
  auto exit_code = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(exit_code("train --out /tmp/aai_cli_exit") == 2);             // missing manifest
  CHECK(exit_code("synth --n 2 --out /proc/nope") == 3);              // unwritable dir
  CHECK(exit_code("infer --checkpoint /nonexistent.bin --speech x.wav --egg-out y.wav") == 3);
  CHECK(exit_code("eval --checkpoint /nonexistent.bin --manifest m.csv") == 3);
}

TEST_CASE("the five-command sequence runs end-to-end from an empty directory") {
  const auto& p = pipeline();  // reuse the trained tiny model
  const std::string bin = AAI_BINARY;
  const fs::path root = fs::temp_directory_path() / "aai_cli_e2e";
  fs::remove_all(root);
  fs::create_directories(root);

  auto run_ok = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw) == 0;
  };

  REQUIRE(run_ok("synth --n 6 --seed 9 --out " + (root / "data").string()));

  // tiny training budget through real flags
  REQUIRE(run_ok("train --manifest " + (root / "data/manifest.csv").string() + " --out " +
                 (root / "run").string() +
                 " --steps 40 --prior-steps 40 --batch 16 --seed 9"));

  const DatasetManifest m = load_manifest(root / "data/manifest.csv");
  std::string test_wav;
  for (const auto& e : m.entries)
    if (e.split == "test") test_wav = m.speech_file(e).string();
  REQUIRE(!test_wav.empty());

  REQUIRE(run_ok("infer --checkpoint " + (root / "run/checkpoint.bin").string() + " --speech " +
                 test_wav + " --egg-out " + (root / "est.wav").string()));
  REQUIRE(run_ok("eval --checkpoint " + (root / "run/checkpoint.bin").string() + " --manifest " +
                 (root / "data/manifest.csv").string() + " --out " + (root / "eval").string() +
                 " --self-test"));
  REQUIRE(run_ok("report --result " + (root / "eval/result.json").string() + " --out " +
                 (root / "report").string()));
  CHECK(fs::exists(root / "report/table.txt"));

  // a speech file shorter than one window is a data error (exit 3)
  Waveform tiny;
  tiny.rate = 16000;
  tiny.samples.assign(100, 0.1);
  write_wav(tiny, root / "tiny.wav", WavEncoding::Float32);
  const int raw = std::system((bin + " infer --checkpoint " +
                               (root / "run/checkpoint.bin").string() + " --speech " +
                               (root / "tiny.wav").string() + " --egg-out " +
                               (root / "tiny_out.wav").string() + " >/dev/null 2>&1")
                                  .c_str());
  CHECK(WEXITSTATUS(raw) == 3);
}
#endif
