#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aai/config.hpp"
#include "aai/metrics.hpp"
#include "json.hpp"

namespace aai {

nlohmann::json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

// All per-condition reports of one evaluation run plus the config snapshot
// that produced them; the file alone suffices to re-run the experiment.
struct ExperimentResult {
  RunConfig config;
  std::vector<std::pair<std::string, MetricsReport>> reports;  // ordered by condition
};

void save_result(const ExperimentResult& result, const std::filesystem::path& path);
ExperimentResult load_result(const std::filesystem::path& path);

// Aligned-column table, one row per condition.
std::string render_table(const ExperimentResult& result);

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series);

// Metric-vs-SNR line plots (one file per detection metric) into `dir`.
std::vector<std::filesystem::path> write_result_plots(const ExperimentResult& result,
                                                      const std::filesystem::path& dir);

}  // namespace aai
