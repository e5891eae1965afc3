#include "aai/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "aai/errors.hpp"

namespace aai {

namespace {

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["rate"] = cfg.rate;
  j["window_ms"] = cfg.window_ms;
  j["stride_train"] = cfg.stride_train;
  j["stride_infer"] = cfg.stride_infer;

  nlohmann::json t;
  t["batch"] = cfg.train.batch;
  t["k_inner"] = cfg.train.k_inner;
  t["prior_steps"] = cfg.train.prior_steps;
  t["aai_steps"] = cfg.train.aai_steps;
  t["lr"] = cfg.train.adam.lr;
  t["beta1"] = cfg.train.adam.beta1;
  t["beta2"] = cfg.train.adam.beta2;
  t["lambda_adv"] = cfg.train.lambda_adv;
  t["eps_std"] = cfg.train.eps_std;
  t["loss"] = cfg.train.recon == TrainConfig::Recon::Cosine ? "cosine" : "l2";
  t["val_interval"] = cfg.train.val_interval;
  t["patience"] = cfg.train.patience;
  t["latent_dim"] = cfg.train.latent_dim;
  t["encoder_hidden"] = cfg.train.encoder_hidden;
  t["disc_hidden"] = cfg.train.disc_hidden;
  t["min_target_norm"] = cfg.train.min_target_norm;
  t["val_max_frames"] = cfg.train.val_max_frames;
  j["train"] = t;

  nlohmann::json c;
  c["count"] = cfg.corpus.count;
  c["f0_min"] = cfg.corpus.f0_min;
  c["f0_max"] = cfg.corpus.f0_max;
  c["cq_min"] = cfg.corpus.cq_min;
  c["cq_max"] = cfg.corpus.cq_max;
  c["sq_min"] = cfg.corpus.sq_min;
  c["sq_max"] = cfg.corpus.sq_max;
  c["train_frac"] = cfg.corpus.train_frac;
  c["val_frac"] = cfg.corpus.val_frac;
  j["corpus"] = c;

  // Serialized in the same "kind:level,level;kind:..." form the flag takes.
  std::string white, babble;
  for (const auto& e : cfg.sweep) {
    std::string& group = e.kind == NoiseSpec::Kind::White ? white : babble;
    if (!group.empty()) group += ',';
    std::ostringstream os;
    os << e.snr_db;
    group += os.str();
  }
  std::string sweep;
  if (!white.empty()) sweep += "white:" + white;
  if (!babble.empty()) sweep += (sweep.empty() ? "" : ";") + std::string("babble:") + babble;
  j["sweep"] = sweep;

  j["manifest"] = cfg.manifest;
  j["out_dir"] = cfg.out_dir;
  j["checkpoint"] = cfg.checkpoint;
  j["babble"] = cfg.babble;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  get_if_present(j, "seed", cfg.seed);
  get_if_present(j, "rate", cfg.rate);
  get_if_present(j, "window_ms", cfg.window_ms);
  get_if_present(j, "stride_train", cfg.stride_train);
  get_if_present(j, "stride_infer", cfg.stride_infer);

  if (j.contains("train")) {
    const auto& t = j.at("train");
    get_if_present(t, "batch", cfg.train.batch);
    get_if_present(t, "k_inner", cfg.train.k_inner);
    get_if_present(t, "prior_steps", cfg.train.prior_steps);
    get_if_present(t, "aai_steps", cfg.train.aai_steps);
    get_if_present(t, "lr", cfg.train.adam.lr);
    get_if_present(t, "beta1", cfg.train.adam.beta1);
    get_if_present(t, "beta2", cfg.train.adam.beta2);
    get_if_present(t, "lambda_adv", cfg.train.lambda_adv);
    get_if_present(t, "eps_std", cfg.train.eps_std);
    if (t.contains("loss")) {
      const std::string loss = t.at("loss");
      if (loss == "cosine")
        cfg.train.recon = TrainConfig::Recon::Cosine;
      else if (loss == "l2")
        cfg.train.recon = TrainConfig::Recon::L2;
      else
        throw ConfigError("unknown loss '" + loss + "' (expected cosine or l2)");
    }
    get_if_present(t, "val_interval", cfg.train.val_interval);
    get_if_present(t, "patience", cfg.train.patience);
    get_if_present(t, "latent_dim", cfg.train.latent_dim);
    get_if_present(t, "encoder_hidden", cfg.train.encoder_hidden);
    get_if_present(t, "disc_hidden", cfg.train.disc_hidden);
    get_if_present(t, "min_target_norm", cfg.train.min_target_norm);
    get_if_present(t, "val_max_frames", cfg.train.val_max_frames);
  }

  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    get_if_present(c, "count", cfg.corpus.count);
    get_if_present(c, "f0_min", cfg.corpus.f0_min);
    get_if_present(c, "f0_max", cfg.corpus.f0_max);
    get_if_present(c, "cq_min", cfg.corpus.cq_min);
    get_if_present(c, "cq_max", cfg.corpus.cq_max);
    get_if_present(c, "sq_min", cfg.corpus.sq_min);
    get_if_present(c, "sq_max", cfg.corpus.sq_max);
    get_if_present(c, "train_frac", cfg.corpus.train_frac);
    get_if_present(c, "val_frac", cfg.corpus.val_frac);
  }

  if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep").get<std::string>());

  get_if_present(j, "manifest", cfg.manifest);
  get_if_present(j, "out_dir", cfg.out_dir);
  get_if_present(j, "checkpoint", cfg.checkpoint);
  get_if_present(j, "babble", cfg.babble);

  cfg.corpus.seed = cfg.seed;
  cfg.corpus.rate = cfg.rate;
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<RunConfig::SweepEntry> parse_sweep(const std::string& spec) {
  std::vector<RunConfig::SweepEntry> out;
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.empty()) continue;
    const auto colon = group.find(':');
    if (colon == std::string::npos) throw ConfigError("bad sweep entry: " + group);
    std::string kind_str = group.substr(0, colon);
    NoiseSpec::Kind kind;
    if (kind_str == "white")
      kind = NoiseSpec::Kind::White;
    else if (kind_str == "babble")
      kind = NoiseSpec::Kind::Babble;
    else
      throw ConfigError("unknown noise kind: " + kind_str);
    std::stringstream levels(group.substr(colon + 1));
    std::string level;
    while (std::getline(levels, level, ',')) {
      try {
        out.push_back({kind, std::stod(level)});
      } catch (const std::exception&) {
        throw ConfigError("bad SNR value in sweep: " + level);
      }
    }
  }
  return out;
}

std::string condition_name(const RunConfig::SweepEntry& e) {
  std::ostringstream os;
  os << (e.kind == NoiseSpec::Kind::White ? "white" : "babble") << '@' << e.snr_db << "dB";
  return os.str();
}

std::filesystem::path resolve_data_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  const char* root = std::getenv("AAI_DATA_DIR");
  if (root == nullptr || *root == '\0') return p;
  return std::filesystem::path(root) / p;
}

}  // namespace aai
