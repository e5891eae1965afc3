#include "aai/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "aai/errors.hpp"
#include "aai/metrics.hpp"
#include "aai/report.hpp"

namespace aai::cli {

namespace {

UtterancePair load_normalized_pair(const DatasetManifest& m, const ManifestEntry& e,
                                   double rate) {
  UtterancePair pair = load_pair(m.speech_file(e), m.egg_file(e), rate, e.id);
  return normalize_polarity(pair).pair;
}

std::vector<UtterancePair> load_split(const DatasetManifest& m, const std::string& split,
                                      double rate) {
  std::vector<UtterancePair> pairs;
  for (const auto& e : m.entries)
    if (e.split == split) pairs.push_back(load_normalized_pair(m, e, rate));
  return pairs;
}

void normalize_if_nonzero(Waveform& w) {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : w.samples) s /= peak;
}

void flip_speech_polarity_if_needed(Waveform& speech, double dead_zone = 0.05) {
  if (slope_skewness(speech) > dead_zone)
    for (double& s : speech.samples) s = -s;
}

}  // namespace

std::filesystem::path run_synth(const RunConfig& cfg) {
  const auto out_dir = resolve_data_path(cfg.out_dir);
  synth_corpus(cfg.corpus, out_dir);
  std::ofstream(out_dir / "synth_config.json") << to_json(cfg).dump(2) << '\n';
  const auto manifest_path = out_dir / "manifest.csv";
  std::cout << "wrote " << cfg.corpus.count << " utterances, manifest: "
            << manifest_path.string() << '\n';
  return manifest_path;
}

std::filesystem::path run_train(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("train requires --manifest");
  const auto manifest = load_manifest(resolve_data_path(cfg.manifest));
  const auto out_dir = resolve_data_path(cfg.out_dir);
  std::filesystem::create_directories(out_dir);

  auto train_pairs = load_split(manifest, "train", cfg.rate);
  auto val_pairs = load_split(manifest, "val", cfg.rate);
  if (train_pairs.empty()) throw DataError("manifest has no train split");

  const FrameDataset train_set = make_frames(std::move(train_pairs), cfg.window_ms,
                                             cfg.stride_train);
  FrameDataset val_set;
  if (!val_pairs.empty())
    val_set = make_frames(std::move(val_pairs), cfg.window_ms, cfg.stride_train);
  const FrameDataset* val = val_set.empty() ? nullptr : &val_set;

  PriorModel prior;
  AaiTrainState state;
  const auto checkpoint_path = out_dir / "checkpoint.bin";

  if (cfg.resume) {
    const auto resume_from =
        cfg.checkpoint.empty() ? checkpoint_path : resolve_data_path(cfg.checkpoint);
    Checkpoint ck = load_checkpoint(resume_from);
    prior.egg_encoder = std::move(ck.egg_encoder);
    prior.egg_decoder = ck.state.model.egg_decoder;
    prior.latent_dim = ck.latent_dim;
    state = std::move(ck.state);
    std::cout << "resuming from step " << state.step << '\n';
  } else {
    TrainLog prior_log;
    prior = train_prior(train_set, val, cfg.train, prior_log);
    prior_log.save_csv(out_dir / "prior_log.csv");
    for (const auto& w : prior_log.warnings) std::cerr << "warning: " << w << '\n';
    state = init_aai_state(prior, cfg.train, static_cast<std::size_t>(train_set.window()));
  }

  TrainLog log;
  train_aai_state(state, train_set, val, prior, cfg.train, log);
  log.save_csv(out_dir / "train_log.csv");
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << '\n';

  Checkpoint ck;
  ck.egg_encoder = std::move(prior.egg_encoder);
  ck.latent_dim = cfg.train.latent_dim;
  ck.state = std::move(state);
  ck.config_json = to_json(cfg).dump();
  save_checkpoint(ck, checkpoint_path);

  double final_val = std::numeric_limits<double>::quiet_NaN();
  for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it)
    if (std::isfinite(it->val)) {
      final_val = it->val;
      break;
    }
  std::cout << "checkpoint: " << checkpoint_path.string() << '\n';
  std::cout << "final validation cosine distance: " << final_val << '\n';
  return checkpoint_path;
}

void run_infer(const RunConfig& cfg, const std::string& speech_path,
               const std::string& out_path) {
  if (cfg.checkpoint.empty()) throw ConfigError("infer requires --checkpoint");
  const Checkpoint ck = load_checkpoint(resolve_data_path(cfg.checkpoint));
  const RunConfig ck_cfg = config_from_json(nlohmann::json::parse(ck.config_json));

  Waveform speech = resample(read_wav(resolve_data_path(speech_path)), ck_cfg.rate);
  peak_normalize(speech);
  flip_speech_polarity_if_needed(speech);

  Waveform egg = infer(ck.state.model, speech);
  normalize_if_nonzero(egg);
  write_wav(egg, resolve_data_path(out_path), WavEncoding::Float32);
  std::cout << "wrote " << out_path << " (" << egg.samples.size() << " samples)\n";
}

namespace {

struct UtteranceEval {
  UtterancePair pair;
  EpochSet ref_epochs;
  CycleExtraction ref_cycles;
  double ref_hnr = std::numeric_limits<double>::quiet_NaN();
};

double window_l2(const Waveform& est, const Waveform& ref, std::size_t window) {
  const std::size_t n = std::min(est.samples.size(), ref.samples.size());
  if (n < window) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + window <= n; start += window) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + window; ++i) {
      const double d = est.samples[i] - ref.samples[i];
      acc += d * d;
    }
    total += acc / static_cast<double>(window);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

std::filesystem::path run_eval(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  if (cfg.manifest.empty()) throw ConfigError("eval requires --manifest");
  const Checkpoint ck = load_checkpoint(resolve_data_path(cfg.checkpoint));
  const RunConfig ck_cfg = config_from_json(nlohmann::json::parse(ck.config_json));
  const auto manifest = load_manifest(resolve_data_path(cfg.manifest));
  const auto out_dir = resolve_data_path(cfg.out_dir);
  std::filesystem::create_directories(out_dir);

  const std::size_t window = ck.state.model.speech_encoder.in_dim();

  Waveform babble;
  bool have_babble = false;
  for (const auto& e : cfg.sweep)
    if (e.kind == NoiseSpec::Kind::Babble) have_babble = true;
  if (have_babble) {
    if (cfg.babble.empty())
      throw DataError("babble noise requested with no registered babble source");
    babble = resample(read_wav(resolve_data_path(cfg.babble)), ck_cfg.rate);
    peak_normalize(babble);
  }

  std::vector<UtteranceEval> utts;
  for (const auto& e : manifest.entries) {
    if (e.split != "test") continue;
    UtteranceEval u;
    u.pair = load_normalized_pair(manifest, e, ck_cfg.rate);
    const VoicingMask vm = detect_voicing(u.pair.egg);
    u.ref_epochs = extract_epochs(u.pair.egg, vm);
    u.ref_epochs.source = EpochSource::Reference;
    u.ref_cycles = cycle_metrics(u.ref_epochs, u.pair.egg);
    try {
      u.ref_hnr = hnr(u.pair.egg, vm);
    } catch (const DataError&) {
    }
    utts.push_back(std::move(u));
  }
  if (utts.empty()) throw DataError("manifest has no test split");

  // Pooled reference quotients are condition-independent.
  std::vector<CycleMetrics> ref_cycles_all;
  long ref_skipped = 0;
  std::vector<double> ref_hnrs;
  for (const auto& u : utts) {
    ref_cycles_all.insert(ref_cycles_all.end(), u.ref_cycles.cycles.begin(),
                          u.ref_cycles.cycles.end());
    ref_skipped += u.ref_cycles.skipped;
    if (std::isfinite(u.ref_hnr)) ref_hnrs.push_back(u.ref_hnr);
  }
  const double ref_hnr_mean =
      ref_hnrs.empty()
          ? 0.0
          : std::accumulate(ref_hnrs.begin(), ref_hnrs.end(), 0.0) / ref_hnrs.size();

  struct Condition {
    std::string name;
    bool noisy;
    RunConfig::SweepEntry entry{};
  };
  std::vector<Condition> conditions{{"clean", false}};
  for (const auto& e : cfg.sweep) conditions.push_back({condition_name(e), true, e});

  ExperimentResult result;
  result.config = cfg;

  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const auto& cond = conditions[ci];
    DetectionTally gci_tally, goi_tally;
    std::vector<CycleMetrics> est_cycles_all;
    long est_skipped = 0;
    std::vector<double> est_hnrs;
    double l2_sum = 0.0;

    for (std::size_t ui = 0; ui < utts.size(); ++ui) {
      const auto& u = utts[ui];
      Waveform speech = u.pair.speech;
      if (cond.noisy) {
        NoiseSpec spec;
        spec.kind = cond.entry.kind;
        spec.snr_db = cond.entry.snr_db;
        spec.seed = mix_seed(mix_seed(cfg.seed, ci), ui);
        speech = add_noise(speech, spec, have_babble ? &babble : nullptr);
      }
      Waveform est = infer(ck.state.model, speech);
      normalize_if_nonzero(est);

      const VoicingMask est_vm = detect_voicing(est);
      EpochSet est_ep = extract_epochs(est, est_vm);
      est_ep.source = EpochSource::Estimated;

      gci_tally.add(tally_detection(u.ref_epochs, est_ep, EpochKind::Gci));
      goi_tally.add(tally_detection(u.ref_epochs, est_ep, EpochKind::Goi));

      const CycleExtraction ec = cycle_metrics(est_ep, est);
      est_cycles_all.insert(est_cycles_all.end(), ec.cycles.begin(), ec.cycles.end());
      est_skipped += ec.skipped;
      try {
        est_hnrs.push_back(hnr(est, est_vm));
      } catch (const DataError&) {
      }
      l2_sum += window_l2(est, u.pair.egg, window);
    }

    MetricsReport report;
    report.dataset = cond.name;
    report.gci = gci_tally.score();
    report.goi = goi_tally.score();
    report.truth = summarize_quotients(ref_cycles_all, ref_hnr_mean);
    report.estimated = summarize_quotients(
        est_cycles_all,
        est_hnrs.empty()
            ? 0.0
            : std::accumulate(est_hnrs.begin(), est_hnrs.end(), 0.0) / est_hnrs.size());
    report.skipped_cycles = ref_skipped + est_skipped;
    report.l2_window_mean = l2_sum / static_cast<double>(utts.size());
    result.reports.emplace_back(cond.name, report);
  }

  if (cfg.self_test) {
    // Reference scored against itself must be perfect.
    DetectionTally g, o;
    for (const auto& u : utts) {
      g.add(tally_detection(u.ref_epochs, u.ref_epochs, EpochKind::Gci));
      o.add(tally_detection(u.ref_epochs, u.ref_epochs, EpochKind::Goi));
    }
    MetricsReport report;
    report.dataset = "selftest-reference";
    report.gci = g.score();
    report.goi = o.score();
    report.truth = summarize_quotients(ref_cycles_all, ref_hnr_mean);
    report.estimated = report.truth;
    report.skipped_cycles = ref_skipped;
    result.reports.emplace_back("selftest-reference", report);
    std::cout << "self-test: GCI IDR " << report.gci.idr << "%, MR " << report.gci.mr
              << "%, FAR " << report.gci.far << "%\n";
  }

  const auto result_path = out_dir / "result.json";
  save_result(result, result_path);
  const std::string table = render_table(result);
  std::ofstream(out_dir / "table.txt") << table;
  write_result_plots(result, out_dir / "plots");
  std::cout << table;
  std::cout << "result: " << result_path.string() << '\n';
  return result_path;
}

void run_report(const RunConfig& cfg, const std::string& result_path) {
  const ExperimentResult result = load_result(resolve_data_path(result_path));
  const auto out_dir = cfg.out_dir.empty()
                           ? resolve_data_path(result_path).parent_path()
                           : resolve_data_path(cfg.out_dir);
  std::filesystem::create_directories(out_dir);
  const std::string table = render_table(result);
  std::ofstream(out_dir / "table.txt") << table;
  write_result_plots(result, out_dir / "plots");
  std::cout << table;
}

}  // namespace aai::cli
