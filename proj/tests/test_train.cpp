#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aai/errors.hpp"
#include "aai/preprocess.hpp"
#include "aai/synth.hpp"
#include "aai/train.hpp"

using namespace aai;

namespace {

// In-memory synthetic utterance with silence padding on both sides.
UtterancePair synth_pair(std::uint64_t seed, double cq_base = 0.45, double dur_s = 0.4) {
  Rng rng(mix_seed(seed, 0x7061ULL));
  const double f0 = rng.uniform(130.0, 240.0);
  std::vector<GlottalCycleSpec> cycles;
  double t = 0.0;
  while (t < dur_s) {
    GlottalCycleSpec c;
    c.period = 1.0 / (f0 * (1.0 + rng.uniform(-0.02, 0.02)));
    c.cq = std::clamp(cq_base + rng.uniform(-0.02, 0.02), 0.3, 0.6);
    c.sq = std::clamp(1.2 + rng.uniform(-0.2, 0.2), 0.7, 2.0);
    c.amplitude = rng.uniform(0.85, 1.0);
    cycles.push_back(c);
    t += c.period;
  }
  auto [egg, truth] = synth_egg(cycles, 16000.0);

  const std::size_t pad = 800;  // 50 ms of silence on each side
  Waveform padded;
  padded.rate = egg.rate;
  padded.role = ChannelRole::Egg;
  padded.samples.assign(pad, 0.0);
  padded.samples.insert(padded.samples.end(), egg.samples.begin(), egg.samples.end());
  padded.samples.insert(padded.samples.end(), pad, 0.0);

  const std::vector<Formant> formants = {
      {rng.uniform(400.0, 800.0), 90.0}, {rng.uniform(1000.0, 2000.0), 120.0}};
  UtterancePair pair;
  pair.id = "synth" + std::to_string(seed);
  pair.egg = padded;
  pair.speech = synth_speech_from_egg(padded, formants, mix_seed(seed, 0x7370ULL));
  peak_normalize(pair.speech);
  peak_normalize(pair.egg);
  return pair;
}

FrameDataset small_dataset(int n_utts, std::uint64_t seed, int stride = 8) {
  std::vector<UtterancePair> pairs;
  for (int i = 0; i < n_utts; ++i) pairs.push_back(synth_pair(seed + i));
  return make_frames(std::move(pairs), 12.0, stride);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.seed = 77;
  cfg.batch = 32;
  cfg.prior_steps = 150;
  cfg.aai_steps = 120;
  cfg.val_interval = 30;
  cfg.patience = 0;  // keep runs exactly at budget
  cfg.latent_dim = 8;
  cfg.encoder_hidden = {48, 24};
  cfg.disc_hidden = {16};
  cfg.val_max_frames = 256;
  return cfg;
}

std::string serialize_state(const Checkpoint& ck) {
  std::stringstream buf;
  save_checkpoint(ck, "/tmp/aai_state_probe.bin");
  std::ifstream in("/tmp/aai_state_probe.bin", std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string model_bytes(const AAIModel& m) {
  std::stringstream buf;
  write_net(buf, m.speech_encoder);
  write_net(buf, m.egg_decoder);
  write_net(buf, m.discriminator);
  return buf.str();
}

}  // namespace

TEST_CASE("prior autoencoder overfits a single repeated frame") {
  // one-window utterance: the dataset contains exactly one frame
  std::vector<GlottalCycleSpec> cycles(2, {0.006, 0.5, 1.0, 1.0});
  auto [egg, truth] = synth_egg(cycles, 16000.0);
  egg.samples.resize(192);
  UtterancePair pair;
  pair.id = "one";
  pair.egg = egg;
  pair.speech = egg;
  const FrameDataset ds = frame(pair, 12.0, 1);
  REQUIRE(ds.size() == 1);

  TrainConfig cfg = small_config();
  cfg.prior_steps = 500;
  cfg.batch = 16;
  TrainLog log;
  PriorModel prior = train_prior(ds, nullptr, cfg, log);

  Matrix y;
  const std::vector<std::size_t> ids{0};
  ds.gather(ids, nullptr, &y);
  const Matrix z = forward_eval(prior.egg_encoder, y);
  const Matrix yhat = forward_eval(prior.egg_decoder, z);
  CHECK(cosine_loss_batch(yhat, y) < 0.05);
}

TEST_CASE("zero training steps return the initialization") {
  const FrameDataset ds = small_dataset(2, 100);
  TrainConfig cfg = small_config();

  TrainLog log1, log2;
  cfg.prior_steps = 0;
  const PriorModel a = train_prior(ds, nullptr, cfg, log1);
  const PriorModel b = train_prior(ds, nullptr, cfg, log2);
  CHECK(a.egg_encoder.layers[0].weight.data == b.egg_encoder.layers[0].weight.data);
  CHECK(log1.rows.empty());

  AaiTrainState state = init_aai_state(a, cfg, 192);
  const std::string before = model_bytes(state.model);
  cfg.aai_steps = 0;
  TrainLog log3;
  train_aai_state(state, ds, nullptr, a, cfg, log3);
  CHECK(model_bytes(state.model) == before);
  CHECK(state.step == 0);
}

TEST_CASE("empty dataset is rejected") {
  TrainConfig cfg = small_config();
  TrainLog log;
  FrameDataset empty;
  CHECK_THROWS_AS(train_prior(empty, nullptr, cfg, log), DataError);
}

TEST_CASE("the loop runs exactly K inner updates per discriminator update") {
  const FrameDataset ds = small_dataset(2, 200);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 60;
  cfg.aai_steps = 30;
  cfg.k_inner = 3;

  TrainLog prior_log, log;
  const PriorModel prior = train_prior(ds, nullptr, cfg, prior_log);
  train_aai(ds, &ds, prior, cfg, log);

  REQUIRE(log.rows.size() == 30);
  long disc_updates = 0;
  for (const auto& row : log.rows) {
    const bool has_disc = std::isfinite(row.disc);
    CHECK(has_disc == (row.step % cfg.k_inner == 0));
    if (has_disc) ++disc_updates;
  }
  CHECK(disc_updates == 10);
  CHECK(log.provenance_checks == disc_updates);

  // steps strictly increasing
  for (std::size_t i = 1; i < log.rows.size(); ++i)
    CHECK(log.rows[i].step == log.rows[i - 1].step + 1);
}

TEST_CASE("with K=1 and no adversarial term the model matches a plain regression") {
  const FrameDataset train_set = small_dataset(3, 300);
  const FrameDataset val_set = small_dataset(1, 350);

  TrainConfig cfg = small_config();
  cfg.prior_steps = 200;
  cfg.aai_steps = 400;
  cfg.k_inner = 1;
  cfg.lambda_adv = 0.0;

  TrainLog prior_log, log;
  const PriorModel prior = train_prior(train_set, &val_set, cfg, prior_log);
  const AAIModel model = train_aai(train_set, &val_set, prior, cfg, log);

  // independently written supervised baseline on the same budget
  Rng rng(4242);
  DenseNet enc = make_dense_net(192, hidden_stack(cfg.encoder_hidden, cfg.latent_dim), rng);
  DenseNet dec = make_dense_net(static_cast<std::size_t>(cfg.latent_dim),
                                hidden_stack({24, 48}, 192), rng);
  AdamState a_enc = make_adam_state(enc), a_dec = make_adam_state(dec);
  NetGrads g_enc = make_grads(enc), g_dec = make_grads(dec);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train_set.size(); ++i)
    if (train_set.egg_energy(i) > 1e-12) pool.push_back(i);
  for (long step = 1; step <= cfg.prior_steps + cfg.aai_steps; ++step) {
    Rng srng(mix_seed(999, static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> ids(cfg.batch);
    for (auto& id : ids) id = pool[srng.index(pool.size())];
    Matrix x, y;
    train_set.gather(ids, &x, &y);
    ForwardCache fe, fd;
    const Matrix z = forward(enc, x, Mode::Train, &fe);
    const Matrix yhat = forward(dec, z, Mode::Train, &fd);
    Matrix dy;
    cosine_loss_batch(yhat, y, &dy);
    zero_grads(g_enc);
    zero_grads(g_dec);
    const Matrix dz = backward(dec, fd, dy, g_dec);
    backward(enc, fe, dz, g_enc);
    adam_step(dec, g_dec, a_dec, cfg.adam);
    adam_step(enc, g_enc, a_enc, cfg.adam);
  }

  // validation cosine for both
  std::vector<std::size_t> vids;
  for (std::size_t i = 0; i < val_set.size(); ++i)
    if (val_set.egg_energy(i) > 1e-12) vids.push_back(i);
  vids.resize(std::min<std::size_t>(vids.size(), 200));
  Matrix vx, vy;
  val_set.gather(vids, &vx, &vy);

  const double aai_val =
      cosine_loss_batch(forward_eval(model.egg_decoder, forward_eval(model.speech_encoder, vx)), vy);
  const double base_val = cosine_loss_batch(forward_eval(dec, forward_eval(enc, vx)), vy);
  MESSAGE("aai(lambda=0) val = " << aai_val << ", baseline val = " << base_val);
  CHECK(aai_val <= 1.2 * base_val);
}

TEST_CASE("inference with stubbed models") {
  const std::size_t w = 16;

  auto identity_layer = [&] {
    Layer l;
    l.weight = Matrix(w, w);
    for (std::size_t i = 0; i < w; ++i) l.weight(i, i) = 1.0;
    l.bias.assign(w, 0.0);
    l.act = Activation::Linear;
    return l;
  };

  AAIModel stub;
  stub.latent_dim = static_cast<int>(w);
  stub.speech_encoder.layers = {identity_layer()};
  stub.egg_decoder.layers = {identity_layer()};
  Layer dl;
  dl.weight = Matrix(w, 1);
  dl.bias.assign(1, 0.0);
  dl.act = Activation::Sigmoid;
  stub.discriminator.layers = {dl};

  Rng rng(55);
  Waveform speech;
  speech.rate = 16000;
  speech.samples.resize(300);
  for (double& s : speech.samples) s = rng.uniform(-1.0, 1.0);

  SUBCASE("identity mapping reproduces the input exactly") {
    const Waveform out = infer(stub, speech, 64);
    REQUIRE(out.samples.size() == speech.samples.size());
    CHECK(out.samples == speech.samples);
  }

  SUBCASE("constant decoder gives a constant output") {
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j < w; ++j) stub.egg_decoder.layers[0].weight(i, j) = 0.0;
    for (std::size_t j = 0; j < w; ++j) stub.egg_decoder.layers[0].bias[j] = 0.625;
    const Waveform out = infer(stub, speech, 64);
    for (double s : out.samples) CHECK(s == 0.625);
  }

  SUBCASE("too-short input is an error") {
    Waveform tiny;
    tiny.rate = 16000;
    tiny.samples.assign(w - 1, 0.1);
    CHECK_THROWS_AS(infer(stub, tiny), DataError);
  }
}

TEST_CASE("prior latents separate EGG shape families") {
  std::vector<UtterancePair> pairs;
  for (int i = 0; i < 2; ++i) pairs.push_back(synth_pair(400 + i, 0.33));
  for (int i = 0; i < 2; ++i) pairs.push_back(synth_pair(410 + i, 0.57));
  const FrameDataset ds = make_frames(std::move(pairs), 12.0, 4);

  TrainConfig cfg = small_config();
  cfg.prior_steps = 400;
  TrainLog log;
  const PriorModel prior = train_prior(ds, nullptr, cfg, log);

  // family batches: frames from low-cq vs high-cq utterances
  std::vector<std::size_t> low_ids, high_ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.egg_energy(i) < 1e-12) continue;
    const auto& f = ds.frames()[i];
    if (f.utterance < 2 && low_ids.size() < 64)
      low_ids.push_back(i);
    else if (f.utterance >= 2 && high_ids.size() < 64)
      high_ids.push_back(i);
  }
  Matrix low_y, high_y;
  ds.gather(low_ids, nullptr, &low_y);
  ds.gather(high_ids, nullptr, &high_y);

  const Matrix zl = sample_prior(prior, low_y);
  const Matrix zh = sample_prior(prior, high_y);
  CHECK(zl.rows == low_ids.size());
  CHECK(zl.cols == static_cast<std::size_t>(cfg.latent_dim));

  // determinism
  const Matrix zl2 = sample_prior(prior, low_y);
  CHECK(zl.data == zl2.data);

  auto mean_dist = [](const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.rows; i += 4)
      for (std::size_t j = 0; j < b.rows; j += 4) {
        double d = 0.0;
        for (std::size_t k = 0; k < a.cols; ++k) {
          const double diff = a(i, k) - b(j, k);
          d += diff * diff;
        }
        acc += std::sqrt(d);
        ++count;
      }
    return acc / static_cast<double>(count);
  };
  const double within = 0.5 * (mean_dist(zl, zl) + mean_dist(zh, zh));
  const double between = mean_dist(zl, zh);
  MESSAGE("within " << within << " between " << between);
  CHECK(between > within);
}

TEST_CASE("training is deterministic and checkpoints round-trip bit-exactly") {
  const FrameDataset ds = small_dataset(2, 500);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 80;
  cfg.aai_steps = 60;

  auto run = [&] {
    TrainLog plog, log;
    const PriorModel prior = train_prior(ds, &ds, cfg, plog);
    AaiTrainState state = init_aai_state(prior, cfg, 192);
    train_aai_state(state, ds, &ds, prior, cfg, log);
    Checkpoint ck;
    ck.egg_encoder = prior.egg_encoder;
    ck.state = std::move(state);
    ck.latent_dim = cfg.latent_dim;
    ck.config_json = "{}";
    return std::make_pair(serialize_state(ck), log);
  };

  auto [bytes1, log1] = run();
  auto [bytes2, log2] = run();
  CHECK(bytes1 == bytes2);
  REQUIRE(log1.rows.size() == log2.rows.size());
  for (std::size_t i = 0; i < log1.rows.size(); ++i) {
    CHECK(log1.rows[i].recon == log2.rows[i].recon);
    CHECK((std::isnan(log1.rows[i].disc) == std::isnan(log2.rows[i].disc)));
  }
}

TEST_CASE("resume reproduces an uninterrupted run bit-exactly") {
  const FrameDataset ds = small_dataset(2, 600);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 60;

  TrainLog plog;
  const PriorModel prior = train_prior(ds, nullptr, cfg, plog);

  // uninterrupted: 90 steps
  cfg.aai_steps = 90;
  AaiTrainState straight = init_aai_state(prior, cfg, 192);
  TrainLog log_straight;
  train_aai_state(straight, ds, nullptr, prior, cfg, log_straight);

  // interrupted at 40, checkpointed, resumed to 90
  cfg.aai_steps = 40;
  AaiTrainState part = init_aai_state(prior, cfg, 192);
  TrainLog log_a;
  train_aai_state(part, ds, nullptr, prior, cfg, log_a);

  Checkpoint ck;
  ck.egg_encoder = prior.egg_encoder;
  ck.state = std::move(part);
  ck.latent_dim = cfg.latent_dim;
  ck.config_json = "{}";
  const auto path = std::filesystem::temp_directory_path() / "aai_resume.bin";
  save_checkpoint(ck, path);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.state.step == 40);

  cfg.aai_steps = 90;
  TrainLog log_b;
  PriorModel prior2;
  prior2.egg_encoder = loaded.egg_encoder;
  prior2.latent_dim = loaded.latent_dim;
  train_aai_state(loaded.state, ds, nullptr, prior2, cfg, log_b);

  CHECK(model_bytes(loaded.state.model) == model_bytes(straight.model));
  CHECK(log_a.rows.size() + log_b.rows.size() == log_straight.rows.size());
}

TEST_CASE("checkpoint persistence preserves inference output bit-exactly") {
  const FrameDataset ds = small_dataset(2, 700);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 60;
  cfg.aai_steps = 40;

  TrainLog plog, log;
  const PriorModel prior = train_prior(ds, nullptr, cfg, plog);
  AaiTrainState state = init_aai_state(prior, cfg, 192);
  train_aai_state(state, ds, nullptr, prior, cfg, log);

  const UtterancePair probe = synth_pair(999);
  const Waveform before = infer(state.model, probe.speech);

  Checkpoint ck;
  ck.egg_encoder = prior.egg_encoder;
  ck.state = std::move(state);
  ck.latent_dim = cfg.latent_dim;
  ck.config_json = "{\"k\": 1}";
  const auto path = std::filesystem::temp_directory_path() / "aai_ck_roundtrip.bin";
  save_checkpoint(ck, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.config_json == ck.config_json);

  const Waveform after = infer(loaded.state.model, probe.speech);
  CHECK(before.samples == after.samples);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path = std::filesystem::temp_directory_path() / "aai_bad_ck.bin";
  std::ofstream(path, std::ios::binary) << "NOTACKPTxxxxxxxxxxx";
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("elbo report") {
  const FrameDataset ds = small_dataset(1, 800);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 40;
  cfg.aai_steps = 20;
  TrainLog plog, log;
  const PriorModel prior = train_prior(ds, nullptr, cfg, plog);
  const AAIModel model = train_aai(ds, nullptr, prior, cfg, log);

  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < ds.size() && ids.size() < 16; ++i)
    if (ds.egg_energy(i) > 1e-12) ids.push_back(i);
  Matrix x, y;
  ds.gather(ids, &x, &y);

  const LossValue with_adv = elbo_report(model, prior, x, y, 1.0);
  CHECK(std::isfinite(with_adv.scalar));
  CHECK(with_adv.components.count("reconstruction") == 1);
  CHECK(with_adv.components.count("adversarial") == 1);

  const LossValue no_adv = elbo_report(model, prior, x, y, 0.0);
  CHECK(no_adv.scalar ==
        doctest::Approx(-no_adv.components.at("reconstruction")).epsilon(1e-12));
}

TEST_CASE("input noise augmentation does not degrade clean validation by more than 10%") {
  const FrameDataset train_set = small_dataset(3, 900);
  const FrameDataset val_set = small_dataset(1, 950);

  TrainConfig cfg = small_config();
  cfg.prior_steps = 250;
  cfg.aai_steps = 800;
  cfg.batch = 64;

  TrainLog plog;
  const PriorModel prior = train_prior(train_set, &val_set, cfg, plog);

  auto final_val = [&](double eps) {
    TrainConfig c = cfg;
    c.eps_std = eps;
    TrainLog log;
    const AAIModel model = train_aai(train_set, &val_set, prior, c, log);
    for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it)
      if (std::isfinite(it->val)) return it->val;
    return std::numeric_limits<double>::infinity();
  };

  const double with_eps = final_val(0.01);
  const double without_eps = final_val(0.0);
  MESSAGE("val with eps " << with_eps << ", without " << without_eps);
  CHECK(with_eps <= 1.10 * without_eps);
}

TEST_CASE("inference scale sensitivity is measured and reported") {
  // The cosine objective makes targets scale-free and inputs are
  // peak-normalized at ingestion; the residual sensitivity to input gain
  // (through normalization statistics) is reported, not asserted.
  const FrameDataset ds = small_dataset(2, 1200);
  TrainConfig cfg = small_config();
  cfg.prior_steps = 80;
  cfg.aai_steps = 80;
  TrainLog plog, log;
  const PriorModel prior = train_prior(ds, nullptr, cfg, plog);
  const AAIModel model = train_aai(ds, nullptr, prior, cfg, log);

  const UtterancePair probe = synth_pair(1250);
  const Waveform full = infer(model, probe.speech);
  Waveform half_speech = probe.speech;
  for (double& s : half_speech.samples) s *= 0.5;
  const Waveform half = infer(model, half_speech);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < full.samples.size(); ++i) {
    const double d = full.samples[i] - half.samples[i];
    num += d * d;
    den += full.samples[i] * full.samples[i];
  }
  const double rel = den > 0.0 ? std::sqrt(num / den) : 0.0;
  MESSAGE("relative output change under 0.5x input gain: " << rel);
  CHECK(std::isfinite(rel));
}

TEST_CASE("train log CSV round trip") {
  TrainLog log;
  for (long s = 1; s <= 5; ++s) {
    TrainLogRow r;
    r.step = s;
    r.recon = 0.5 / s;
    r.gen = 0.1 * s;
    if (s % 2 == 0) r.disc = 1.0 + s;
    if (s == 5) r.val = 0.25;
    log.rows.push_back(r);
  }
  const auto path = std::filesystem::temp_directory_path() / "aai_log.csv";
  log.save_csv(path);
  const TrainLog loaded = TrainLog::load_csv(path);
  REQUIRE(loaded.rows.size() == 5);
  CHECK(loaded.rows[4].step == 5);
  CHECK(loaded.rows[4].val == doctest::Approx(0.25));
  CHECK(std::isnan(loaded.rows[0].disc));
  CHECK(loaded.rows[1].disc == doctest::Approx(3.0));
}
