#pragma once

#include <filesystem>
#include <string>

#include "aai/config.hpp"

namespace aai::cli {

// Command implementations behind the `aai` binary; exposed for tests.
// All throw ConfigError / DataError / NumericError; the binary maps those
// to exit codes 2 / 3 / 4.

std::filesystem::path run_synth(const RunConfig& cfg);
std::filesystem::path run_train(const RunConfig& cfg);
void run_infer(const RunConfig& cfg, const std::string& speech_path,
               const std::string& out_path);
std::filesystem::path run_eval(const RunConfig& cfg);
void run_report(const RunConfig& cfg, const std::string& result_path);

}  // namespace aai::cli
