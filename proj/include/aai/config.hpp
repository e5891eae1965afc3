#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aai/preprocess.hpp"
#include "aai/synth.hpp"
#include "aai/train.hpp"
#include "json.hpp"

namespace aai {

// Full run configuration. Every field has a default chosen so that a
// minimal config runs the synthetic pipeline end-to-end; a JSON config file
// overrides defaults and command-line flags override the file.
struct RunConfig {
  std::uint64_t seed = 1234;
  double rate = 16000.0;
  double window_ms = 12.0;
  int stride_train = 16;
  int stride_infer = 1;

  TrainConfig train;
  CorpusConfig corpus;

  struct SweepEntry {
    NoiseSpec::Kind kind;
    double snr_db;
  };
  std::vector<SweepEntry> sweep;

  std::string manifest;
  std::string out_dir = ".";
  std::string checkpoint;
  std::string babble;  // babble noise source WAV
  bool self_test = false;
  bool resume = false;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);

// "white:0,5,10;babble:0,5" -> sweep entries.
std::vector<RunConfig::SweepEntry> parse_sweep(const std::string& spec);

std::string condition_name(const RunConfig::SweepEntry& e);

// Relative data paths resolve against $AAI_DATA_DIR when it is set.
std::filesystem::path resolve_data_path(const std::string& path);

}  // namespace aai
