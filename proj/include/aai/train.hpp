#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "aai/net.hpp"
#include "aai/preprocess.hpp"
#include "aai/wave.hpp"

namespace aai {

// EGG autoencoder. Its encoder realizes the marginal latent prior: sampling
// the prior means pushing real EGG frames through this (frozen) encoder.
struct PriorModel {
  DenseNet egg_encoder;
  DenseNet egg_decoder;
  int latent_dim = 16;
};

// Speech-to-EGG network set: q(z|x), p(y|z) (initialized from the prior's
// decoder and co-trained) and the latent discriminator T(z).
struct AAIModel {
  DenseNet speech_encoder;
  DenseNet egg_decoder;
  DenseNet discriminator;
  int latent_dim = 16;
};

enum class LatentSource { PriorEncoder, SpeechEncoder };

struct LatentBatch {
  Matrix z;
  LatentSource source;
};

struct TrainConfig {
  std::uint64_t seed = 1234;
  int batch = 256;
  int k_inner = 2;  // encoder/decoder updates per discriminator update
  long prior_steps = 5000;
  long aai_steps = 20000;
  AdamConfig adam{};  // lr 2e-4, betas (0.5, 0.999)
  double lambda_adv = 1.0;
  double eps_std = 0.01;  // posterior-widening input noise

  enum class Recon { Cosine, L2 };
  Recon recon = Recon::Cosine;  // reconstruction term of the AAI objective

  long val_interval = 250;
  long patience = 2000;  // early stop on validation plateau; 0 disables
  int latent_dim = 16;
  std::vector<int> encoder_hidden = {160, 128, 96, 64, 32};
  std::vector<int> disc_hidden = {32, 16};
  double min_target_norm = 1e-6;  // frames below this EGG norm are not sampled
  std::size_t val_max_frames = 2048;
};

struct TrainLogRow {
  long step = 0;
  double recon = std::numeric_limits<double>::quiet_NaN();
  double gen = std::numeric_limits<double>::quiet_NaN();
  double disc = std::numeric_limits<double>::quiet_NaN();  // set on discriminator steps
  double val = std::numeric_limits<double>::quiet_NaN();   // set on validation steps
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<std::string> warnings;
  long provenance_checks = 0;  // discriminator real/fake sourcing assertions run

  void save_csv(const std::filesystem::path& path) const;
  static TrainLog load_csv(const std::filesystem::path& path);
};

PriorModel train_prior(const FrameDataset& train, const FrameDataset* val,
                       const TrainConfig& cfg, TrainLog& log);

// Ancestral sampling of the marginal prior: EGG frames through the encoder.
Matrix sample_prior(const PriorModel& prior, const Matrix& egg_batch);
LatentBatch sample_prior_tagged(const PriorModel& prior, const Matrix& egg_batch);

// Resumable training state (the checkpoint payload).
struct AaiTrainState {
  AAIModel model;
  AdamState adam_encoder, adam_decoder, adam_disc;
  long step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  long best_step = 0;
};

AaiTrainState init_aai_state(const PriorModel& prior, const TrainConfig& cfg,
                             std::size_t window);

// Runs the adversarial approximate-inference loop from state.step to
// cfg.aai_steps: K encoder/decoder updates on noise-augmented speech per
// discriminator update, with prior-encoder latents as the real class.
void train_aai_state(AaiTrainState& state, const FrameDataset& train, const FrameDataset* val,
                     const PriorModel& prior, const TrainConfig& cfg, TrainLog& log);

AAIModel train_aai(const FrameDataset& train, const FrameDataset* val, const PriorModel& prior,
                   const TrainConfig& cfg, TrainLog& log);

// Stride-1 inference: every window through encoder/decoder in eval mode,
// per-sample average over all covering windows (incremental means, so a
// constant prediction survives averaging bit-exactly).
Waveform infer(const AAIModel& model, const Waveform& speech,
               std::size_t batch_windows = 2048);

struct LossValue {
  double scalar = 0.0;
  std::map<std::string, double> components;
};

// Surrogate evidence lower bound: -(reconstruction cosine) - lambda * (the
// discriminator's estimate of the prior-matching term). Bookkeeping only.
LossValue elbo_report(const AAIModel& model, const PriorModel& prior, const Matrix& speech,
                      const Matrix& egg, double lambda_adv);

struct Checkpoint {
  static constexpr char kMagic[9] = "AAICKPT1";
  static constexpr std::uint32_t kVersion = 1;

  DenseNet egg_encoder;  // frozen prior encoder
  AaiTrainState state;   // speech encoder, co-trained decoder, discriminator, moments
  int latent_dim = 16;
  std::string config_json;  // full run configuration snapshot
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aai
