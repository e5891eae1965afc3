#include "aai/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aai/errors.hpp"

namespace aai {

namespace {

constexpr std::uint64_t kStreamPriorInit = 0x70726930;
constexpr std::uint64_t kStreamPriorStep = 0x70726931;
constexpr std::uint64_t kStreamEncInit = 0x73656e63;
constexpr std::uint64_t kStreamDiscInit = 0x64697363;
constexpr std::uint64_t kStreamAaiStep = 0x61616931;

// Indices of frames whose EGG window has a usable direction.
std::vector<std::size_t> usable_frames(const FrameDataset& ds, double min_norm) {
  std::vector<std::size_t> idx;
  const double min_energy = min_norm * min_norm;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.egg_energy(i) > min_energy) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> sample_indices(const std::vector<std::size_t>& pool, int count,
                                        Rng& rng) {
  std::vector<std::size_t> out(count);
  for (int i = 0; i < count; ++i) out[i] = pool[rng.index(pool.size())];
  return out;
}

// Deterministic evenly spaced validation subset.
struct ValSet {
  Matrix speech, egg;
  bool present = false;
};

ValSet build_val_set(const FrameDataset* val, const TrainConfig& cfg) {
  ValSet v;
  if (val == nullptr || val->empty()) return v;
  auto pool = usable_frames(*val, cfg.min_target_norm);
  if (pool.empty()) return v;
  std::vector<std::size_t> ids;
  const std::size_t n = std::min(cfg.val_max_frames, pool.size());
  for (std::size_t i = 0; i < n; ++i) ids.push_back(pool[i * pool.size() / n]);
  val->gather(ids, &v.speech, &v.egg);
  v.present = true;
  return v;
}

double val_cosine(const Matrix& input, const Matrix& target, const DenseNet& enc,
                  const DenseNet& dec) {
  const Matrix z = forward_eval(enc, input);
  const Matrix yhat = forward_eval(dec, z);
  return cosine_loss_batch(yhat, target);
}

void check_finite(double v, long step, const char* what) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " diverged (non-finite) at step " +
                       std::to_string(step) + "; last finite step " + std::to_string(step - 1));
}

}  // namespace

PriorModel train_prior(const FrameDataset& train, const FrameDataset* val,
                       const TrainConfig& cfg, TrainLog& log) {
  if (train.empty()) throw DataError("empty dataset");
  const std::size_t window = static_cast<std::size_t>(train.window());

  Rng init_rng(mix_seed(cfg.seed, kStreamPriorInit));
  PriorModel prior;
  prior.latent_dim = cfg.latent_dim;
  prior.egg_encoder = make_dense_net(window, hidden_stack(cfg.encoder_hidden, cfg.latent_dim),
                                     init_rng);
  std::vector<int> dec_hidden(cfg.encoder_hidden.rbegin(), cfg.encoder_hidden.rend());
  prior.egg_decoder = make_dense_net(static_cast<std::size_t>(cfg.latent_dim),
                                     hidden_stack(dec_hidden, static_cast<int>(window)),
                                     init_rng);

  const auto pool = usable_frames(train, cfg.min_target_norm);
  if (pool.empty()) throw DataError("no usable frames (all EGG windows near zero)");
  const ValSet vs = build_val_set(val, cfg);

  NetGrads g_enc = make_grads(prior.egg_encoder);
  NetGrads g_dec = make_grads(prior.egg_decoder);
  AdamState a_enc = make_adam_state(prior.egg_encoder);
  AdamState a_dec = make_adam_state(prior.egg_decoder);

  double best_val = std::numeric_limits<double>::infinity();
  long best_step = 0;

  for (long step = 1; step <= cfg.prior_steps; ++step) {
    Rng rng(mix_seed(mix_seed(cfg.seed, kStreamPriorStep), static_cast<std::uint64_t>(step)));
    const auto ids = sample_indices(pool, cfg.batch, rng);
    Matrix y;
    train.gather(ids, nullptr, &y);

    ForwardCache fc_enc, fc_dec;
    const Matrix z = forward(prior.egg_encoder, y, Mode::Train, &fc_enc);
    const Matrix yhat = forward(prior.egg_decoder, z, Mode::Train, &fc_dec);

    Matrix dyhat;
    const double recon = cosine_loss_batch(yhat, y, &dyhat);
    check_finite(recon, step, "prior reconstruction");

    zero_grads(g_dec);
    zero_grads(g_enc);
    const Matrix dz = backward(prior.egg_decoder, fc_dec, dyhat, g_dec);
    backward(prior.egg_encoder, fc_enc, dz, g_enc);
    adam_step(prior.egg_decoder, g_dec, a_dec, cfg.adam);
    adam_step(prior.egg_encoder, g_enc, a_enc, cfg.adam);

    TrainLogRow row;
    row.step = step;
    row.recon = recon;
    if (vs.present && step % cfg.val_interval == 0) {
      row.val = val_cosine(vs.egg, vs.egg, prior.egg_encoder, prior.egg_decoder);
      if (row.val < best_val - 1e-4) {
        best_val = row.val;
        best_step = step;
      }
    }
    log.rows.push_back(row);
    if (cfg.patience > 0 && vs.present && best_step > 0 && step - best_step >= cfg.patience) {
      log.warnings.push_back("prior: early stop at step " + std::to_string(step));
      break;
    }
  }
  return prior;
}

Matrix sample_prior(const PriorModel& prior, const Matrix& egg_batch) {
  return forward_eval(prior.egg_encoder, egg_batch);
}

LatentBatch sample_prior_tagged(const PriorModel& prior, const Matrix& egg_batch) {
  return {sample_prior(prior, egg_batch), LatentSource::PriorEncoder};
}

AaiTrainState init_aai_state(const PriorModel& prior, const TrainConfig& cfg,
                             std::size_t window) {
  AaiTrainState s;
  s.model.latent_dim = cfg.latent_dim;
  Rng enc_rng(mix_seed(cfg.seed, kStreamEncInit));
  s.model.speech_encoder =
      make_dense_net(window, hidden_stack(cfg.encoder_hidden, cfg.latent_dim), enc_rng);
  s.model.egg_decoder = prior.egg_decoder;  // tied latent spaces at step 0
  Rng disc_rng(mix_seed(cfg.seed, kStreamDiscInit));
  std::vector<LayerSpec> disc_specs;
  for (int w : cfg.disc_hidden) disc_specs.push_back({w, false, Activation::LeakyRelu});
  disc_specs.push_back({1, false, Activation::Sigmoid});
  s.model.discriminator =
      make_dense_net(static_cast<std::size_t>(cfg.latent_dim), disc_specs, disc_rng);
  s.adam_encoder = make_adam_state(s.model.speech_encoder);
  s.adam_decoder = make_adam_state(s.model.egg_decoder);
  s.adam_disc = make_adam_state(s.model.discriminator);
  return s;
}

namespace {

// d(mean_j log(1 - T_j))/dT as a column, scaled by `scale`; clamped
// probabilities contribute zero.
Matrix d_log_one_minus(const Matrix& t, double scale) {
  Matrix d(t.rows, t.cols);
  const double inv_b = 1.0 / static_cast<double>(t.rows);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const double p = t.data[i];
    d.data[i] = (p > kLogEps && p < 1.0 - kLogEps) ? scale * inv_b * (-1.0 / (1.0 - p)) : 0.0;
  }
  return d;
}

Matrix d_log(const Matrix& t, double scale) {
  Matrix d(t.rows, t.cols);
  const double inv_b = 1.0 / static_cast<double>(t.rows);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const double p = t.data[i];
    d.data[i] = (p > kLogEps && p < 1.0 - kLogEps) ? scale * inv_b * (1.0 / p) : 0.0;
  }
  return d;
}

}  // namespace

void train_aai_state(AaiTrainState& state, const FrameDataset& train, const FrameDataset* val,
                     const PriorModel& prior, const TrainConfig& cfg, TrainLog& log) {
  if (train.empty()) throw DataError("empty dataset");
  if (cfg.k_inner < 1) throw ConfigError("k_inner must be >= 1");
  const auto pool = usable_frames(train, cfg.min_target_norm);
  if (pool.empty()) throw DataError("no usable frames (all EGG windows near zero)");
  const ValSet vs = build_val_set(val, cfg);

  AAIModel& model = state.model;
  NetGrads g_enc = make_grads(model.speech_encoder);
  NetGrads g_dec = make_grads(model.egg_decoder);
  NetGrads g_disc = make_grads(model.discriminator);
  NetGrads g_disc_scratch = make_grads(model.discriminator);

  long saturation_run = 0;
  bool saturation_warned = false;

  for (long step = state.step + 1; step <= cfg.aai_steps; ++step) {
    Rng rng(mix_seed(mix_seed(cfg.seed, kStreamAaiStep), static_cast<std::uint64_t>(step)));

    // --- encoder/decoder update on a noise-augmented batch ---
    const auto ids = sample_indices(pool, cfg.batch, rng);
    Matrix x, y;
    train.gather(ids, &x, &y);
    augment_rows(x, cfg.eps_std, rng);

    ForwardCache fc_enc, fc_dec;
    const Matrix zq = forward(model.speech_encoder, x, Mode::Train, &fc_enc);
    const Matrix yhat = forward(model.egg_decoder, zq, Mode::Train, &fc_dec);

    Matrix dyhat;
    const double recon = cfg.recon == TrainConfig::Recon::Cosine
                             ? cosine_loss_batch(yhat, y, &dyhat)
                             : mse_loss_batch(yhat, y, &dyhat);
    check_finite(recon, step, "reconstruction");

    zero_grads(g_dec);
    zero_grads(g_enc);
    Matrix dz = backward(model.egg_decoder, fc_dec, dyhat, g_dec);

    double gen_value = std::numeric_limits<double>::quiet_NaN();
    if (cfg.lambda_adv != 0.0) {
      ForwardCache fc_disc;
      const Matrix t_fake = forward_eval(model.discriminator, zq, &fc_disc);
      gen_value = 0.0;
      for (double p : t_fake.data)
        gen_value -= std::log(1.0 - std::clamp(p, kLogEps, 1.0 - kLogEps));
      gen_value /= static_cast<double>(t_fake.rows);
      check_finite(gen_value, step, "generator objective");

      // Minimized term: lambda * mean log(1 - T(z_q)); psi stays frozen here.
      const Matrix dt = d_log_one_minus(t_fake, cfg.lambda_adv);
      zero_grads(g_disc_scratch);
      const Matrix dz_adv = backward(model.discriminator, fc_disc, dt, g_disc_scratch);
      for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] += dz_adv.data[i];
    }

    backward(model.speech_encoder, fc_enc, dz, g_enc);
    adam_step(model.egg_decoder, g_dec, state.adam_decoder, cfg.adam);
    adam_step(model.speech_encoder, g_enc, state.adam_encoder, cfg.adam);

    TrainLogRow row;
    row.step = step;
    row.recon = recon;
    row.gen = gen_value;

    // --- discriminator update after every K inner updates ---
    if (step % cfg.k_inner == 0) {
      const auto fake_ids = sample_indices(pool, cfg.batch, rng);
      Matrix x2;
      train.gather(fake_ids, &x2, nullptr);
      augment_rows(x2, cfg.eps_std, rng);
      const LatentBatch fake{forward_eval(model.speech_encoder, x2),
                             LatentSource::SpeechEncoder};

      const auto real_ids = sample_indices(pool, cfg.batch, rng);
      Matrix y2;
      train.gather(real_ids, nullptr, &y2);
      const LatentBatch real = sample_prior_tagged(prior, y2);

      // Sourcing contract: reals from the prior encoder on EGG frames,
      // fakes from the speech encoder.
      if (real.source != LatentSource::PriorEncoder ||
          fake.source != LatentSource::SpeechEncoder)
        throw NumericError("discriminator latent provenance violated");
      log.provenance_checks += 1;

      ForwardCache fc_real, fc_fake;
      const Matrix t_real = forward(model.discriminator, real.z, Mode::Train, &fc_real);
      const Matrix t_fake = forward(model.discriminator, fake.z, Mode::Train, &fc_fake);
      const AdvLosses adv = adversarial_losses(t_real.data, t_fake.data);
      check_finite(adv.disc, step, "discriminator loss");

      zero_grads(g_disc);
      backward(model.discriminator, fc_real, d_log(t_real, -1.0), g_disc);
      backward(model.discriminator, fc_fake, d_log_one_minus(t_fake, -1.0), g_disc);
      adam_step(model.discriminator, g_disc, state.adam_disc, cfg.adam);

      row.disc = adv.disc;
      saturation_run = adv.disc < 1e-5 ? saturation_run + 1 : 0;
      if (saturation_run >= 500 && !saturation_warned) {
        log.warnings.push_back("discriminator saturated (disc loss < 1e-5 for 500 steps) at step " +
                               std::to_string(step));
        saturation_warned = true;
      }
    }

    if (vs.present && step % cfg.val_interval == 0) {
      row.val = val_cosine(vs.speech, vs.egg, model.speech_encoder, model.egg_decoder);
      if (row.val < state.best_val - 1e-4) {
        state.best_val = row.val;
        state.best_step = step;
      }
    }
    log.rows.push_back(row);
    state.step = step;

    if (cfg.patience > 0 && vs.present && state.best_step > 0 &&
        step - state.best_step >= cfg.patience) {
      log.warnings.push_back("aai: early stop at step " + std::to_string(step));
      break;
    }
  }
}

AAIModel train_aai(const FrameDataset& train, const FrameDataset* val, const PriorModel& prior,
                   const TrainConfig& cfg, TrainLog& log) {
  AaiTrainState state = init_aai_state(prior, cfg, static_cast<std::size_t>(train.window()));
  train_aai_state(state, train, val, prior, cfg, log);
  return std::move(state.model);
}

Waveform infer(const AAIModel& model, const Waveform& speech, std::size_t batch_windows) {
  const std::size_t w = model.speech_encoder.in_dim();
  if (speech.samples.size() < w) throw DataError("utterance too short for one window");
  const std::size_t n = speech.samples.size();
  const std::size_t n_windows = n - w + 1;

  Waveform out;
  out.rate = speech.rate;
  out.role = ChannelRole::Egg;
  out.samples.assign(n, 0.0);
  std::vector<std::uint32_t> count(n, 0);

  Matrix batch;
  for (std::size_t start = 0; start < n_windows; start += batch_windows) {
    const std::size_t b = std::min(batch_windows, n_windows - start);
    batch.rows = b;
    batch.cols = w;
    batch.data.resize(b * w);
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < b; ++r)
      std::copy_n(speech.samples.begin() + start + r, w, batch.row(r));

    const Matrix z = forward_eval(model.speech_encoder, batch);
    const Matrix yhat = forward_eval(model.egg_decoder, z);

    // Incremental per-sample means over covering windows, in window order.
    for (std::size_t r = 0; r < b; ++r) {
      const double* pred = yhat.row(r);
      const std::size_t s = start + r;
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t t = s + j;
        out.samples[t] += (pred[j] - out.samples[t]) / static_cast<double>(++count[t]);
      }
    }
  }
  return out;
}

LossValue elbo_report(const AAIModel& model, const PriorModel& prior, const Matrix& speech,
                      const Matrix& egg, double lambda_adv) {
  const Matrix z = forward_eval(model.speech_encoder, speech);
  const Matrix yhat = forward_eval(model.egg_decoder, z);
  const double recon = cosine_loss_batch(yhat, egg);
  const Matrix t_fake = forward_eval(model.discriminator, z);
  const Matrix z_real = sample_prior(prior, egg);
  const Matrix t_real = forward_eval(model.discriminator, z_real);
  const AdvLosses adv = adversarial_losses(t_real.data, t_fake.data);

  LossValue v;
  v.components["reconstruction"] = recon;
  v.components["adversarial"] = adv.gen;
  v.components["discriminator"] = adv.disc;
  v.scalar = -recon - lambda_adv * adv.gen;
  return v;
}

namespace {

std::string csv_cell(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void TrainLog::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write train log: " + path.string());
  out << "step,recon,gen,disc,val_cosine\n";
  for (const auto& r : rows)
    out << r.step << ',' << csv_cell(r.recon) << ',' << csv_cell(r.gen) << ','
        << csv_cell(r.disc) << ',' << csv_cell(r.val) << '\n';
  if (!out) throw DataError("train log write failed: " + path.string());
}

TrainLog TrainLog::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open train log: " + path.string());
  TrainLog log;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainLogRow row;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    row.step = std::stol(cell);
    auto parse = [&](double& out_v) {
      if (std::getline(ss, cell, ',') && !cell.empty()) out_v = std::stod(cell);
    };
    parse(row.recon);
    parse(row.gen);
    parse(row.disc);
    parse(row.val);
    log.rows.push_back(row);
  }
  return log;
}

namespace {

template <typename T>
void write_pod_ck(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod_ck(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(Checkpoint::kMagic, 8);
  write_pod_ck<std::uint32_t>(out, Checkpoint::kVersion);
  write_pod_ck<std::uint64_t>(out, ck.config_json.size());
  out.write(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
  write_pod_ck<std::int32_t>(out, ck.latent_dim);
  write_net(out, ck.egg_encoder);
  write_net(out, ck.state.model.speech_encoder);
  write_net(out, ck.state.model.egg_decoder);
  write_net(out, ck.state.model.discriminator);
  write_adam(out, ck.state.adam_encoder);
  write_adam(out, ck.state.adam_decoder);
  write_adam(out, ck.state.adam_disc);
  write_pod_ck<std::int64_t>(out, ck.state.step);
  write_pod_ck<double>(out, ck.state.best_val);
  write_pod_ck<std::int64_t>(out, ck.state.best_step);
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(Checkpoint::kMagic, 8))
    throw DataError("not a checkpoint file: " + path.string());
  const auto version = read_pod_ck<std::uint32_t>(in);
  if (version != Checkpoint::kVersion)
    throw DataError("incompatible checkpoint schema version " + std::to_string(version));
  Checkpoint ck;
  const auto len = read_pod_ck<std::uint64_t>(in);
  ck.config_json.resize(len);
  in.read(ck.config_json.data(), static_cast<std::streamsize>(len));
  ck.latent_dim = read_pod_ck<std::int32_t>(in);
  ck.egg_encoder = read_net(in);
  ck.state.model.speech_encoder = read_net(in);
  ck.state.model.egg_decoder = read_net(in);
  ck.state.model.discriminator = read_net(in);
  ck.state.model.latent_dim = ck.latent_dim;
  ck.state.adam_encoder = read_adam(in);
  ck.state.adam_decoder = read_adam(in);
  ck.state.adam_disc = read_adam(in);
  ck.state.step = read_pod_ck<std::int64_t>(in);
  ck.state.best_val = read_pod_ck<double>(in);
  ck.state.best_step = read_pod_ck<std::int64_t>(in);
  return ck;
}

}  // namespace aai
