#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "aai/cli.hpp"
#include "aai/errors.hpp"

namespace {

// Flags that were explicitly passed override the config file.
struct Flags {
  std::string config;
  std::string manifest, out, checkpoint, babble, speech, result;
  std::string sweep, loss;
  std::uint64_t seed = 0;
  int n = 0;
  long steps = 0, prior_steps = 0;
  int k = 0, batch = 0;
  double lambda_adv = 0.0, eps_std = -1.0, rate = 0.0;
  bool self_test = false, resume = false;
};

aai::RunConfig build_config(const CLI::App& cmd, const Flags& f) {
  aai::RunConfig cfg;
  if (!f.config.empty()) cfg = aai::load_config(aai::resolve_data_path(f.config));

  auto passed = [&](const std::string& name) {
    const CLI::Option* opt = cmd.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (passed("--seed")) {
    cfg.seed = f.seed;
    cfg.corpus.seed = f.seed;
    cfg.train.seed = f.seed;
  }
  if (passed("--rate")) {
    cfg.rate = f.rate;
    cfg.corpus.rate = f.rate;
  }
  if (passed("--manifest")) cfg.manifest = f.manifest;
  if (passed("--out")) cfg.out_dir = f.out;
  if (passed("--checkpoint")) cfg.checkpoint = f.checkpoint;
  if (passed("--babble")) cfg.babble = f.babble;
  if (passed("--n")) cfg.corpus.count = f.n;
  if (passed("--steps")) cfg.train.aai_steps = f.steps;
  if (passed("--prior-steps")) cfg.train.prior_steps = f.prior_steps;
  if (passed("--k")) cfg.train.k_inner = f.k;
  if (passed("--batch")) cfg.train.batch = f.batch;
  if (passed("--lambda-adv")) cfg.train.lambda_adv = f.lambda_adv;
  if (passed("--eps-std")) cfg.train.eps_std = f.eps_std;
  if (passed("--sweep")) cfg.sweep = aai::parse_sweep(f.sweep);
  if (passed("--loss")) {
    if (f.loss == "cosine")
      cfg.train.recon = aai::TrainConfig::Recon::Cosine;
    else if (f.loss == "l2")
      cfg.train.recon = aai::TrainConfig::Recon::L2;
    else
      throw aai::ConfigError("unknown loss '" + f.loss + "' (expected cosine or l2)");
  }
  cfg.self_test = f.self_test;
  cfg.resume = f.resume;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech-to-EGG conversion via adversarial approximate inference"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "JSON config file (flags override it)");
    cmd->add_option("--seed", f.seed, "master random seed");
    cmd->add_option("--out", f.out, "output directory");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic speech/EGG corpus");
  add_common(synth);
  synth->add_option("--n", f.n, "number of utterances");
  synth->add_option("--rate", f.rate, "sample rate (Hz)");

  CLI::App* train = app.add_subcommand("train", "train the prior and the AAI networks");
  add_common(train);
  train->add_option("--manifest", f.manifest, "dataset manifest CSV");
  train->add_option("--loss", f.loss, "reconstruction loss: cosine | l2");
  train->add_option("--steps", f.steps, "AAI step budget");
  train->add_option("--prior-steps", f.prior_steps, "prior autoencoder step budget");
  train->add_option("--k", f.k, "encoder/decoder updates per discriminator update");
  train->add_option("--batch", f.batch, "batch size");
  train->add_option("--lambda-adv", f.lambda_adv, "adversarial term weight");
  train->add_option("--eps-std", f.eps_std, "input augmentation noise std");
  train->add_option("--checkpoint", f.checkpoint, "checkpoint to resume from");
  train->add_flag("--resume", f.resume, "continue training from the checkpoint");

  CLI::App* infer = app.add_subcommand("infer", "estimate the EGG for one speech file");
  add_common(infer);
  infer->add_option("--checkpoint", f.checkpoint, "trained checkpoint")->required();
  infer->add_option("--speech", f.speech, "input speech WAV")->required();
  infer->add_option("--egg-out", f.result, "output EGG WAV path")->required();

  CLI::App* eval = app.add_subcommand("eval", "run the metric suite over the test split");
  add_common(eval);
  eval->add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  eval->add_option("--manifest", f.manifest, "dataset manifest CSV");
  eval->add_option("--sweep", f.sweep, "noise sweep, e.g. white:0,5,10,15,20;babble:0,5");
  eval->add_option("--babble", f.babble, "babble noise source WAV");
  eval->add_flag("--self-test", f.self_test, "also score the reference against itself");

  CLI::App* report = app.add_subcommand("report", "re-render table and plots from a result file");
  add_common(report);
  report->add_option("--result", f.result, "result.json from eval")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      aai::cli::run_synth(build_config(*synth, f));
    } else if (train->parsed()) {
      aai::cli::run_train(build_config(*train, f));
    } else if (infer->parsed()) {
      aai::cli::run_infer(build_config(*infer, f), f.speech, f.result);
    } else if (eval->parsed()) {
      aai::cli::run_eval(build_config(*eval, f));
    } else if (report->parsed()) {
      aai::RunConfig cfg = build_config(*report, f);
      if (report->count("--out") == 0) cfg.out_dir.clear();
      aai::cli::run_report(cfg, f.result);
    }
  } catch (const aai::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const aai::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const aai::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
