#include "aai/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "aai/errors.hpp"

namespace aai {

namespace {

nlohmann::json detection_to_json(const DetectionScore& s) {
  return {{"idr", s.idr}, {"mr", s.mr}, {"far", s.far}, {"ida_ms", s.ida_ms},
          {"cycles", s.cycles}};
}

DetectionScore detection_from_json(const nlohmann::json& j) {
  DetectionScore s;
  s.idr = j.at("idr");
  s.mr = j.at("mr");
  s.far = j.at("far");
  s.ida_ms = j.at("ida_ms");
  if (j.contains("cycles")) s.cycles = j.at("cycles");
  return s;
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["gci"] = detection_to_json(r.gci);
  j["goi"] = detection_to_json(r.goi);
  j["cq"] = {{"true", r.truth.cq}, {"est", r.estimated.cq}};
  j["oq"] = {{"true", r.truth.oq}, {"est", r.estimated.oq}};
  j["sq"] = {{"true", r.truth.sq}, {"est", r.estimated.sq}};
  j["hnr"] = {{"true", r.truth.hnr}, {"est", r.estimated.hnr}};
  j["skipped_cycles"] = r.skipped_cycles;
  j["l2_window_mean"] = r.l2_window_mean;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.dataset = j.at("dataset");
  r.gci = detection_from_json(j.at("gci"));
  r.goi = detection_from_json(j.at("goi"));
  r.truth.cq = j.at("cq").at("true");
  r.estimated.cq = j.at("cq").at("est");
  r.truth.oq = j.at("oq").at("true");
  r.estimated.oq = j.at("oq").at("est");
  r.truth.sq = j.at("sq").at("true");
  r.estimated.sq = j.at("sq").at("est");
  r.truth.hnr = j.at("hnr").at("true");
  r.estimated.hnr = j.at("hnr").at("est");
  r.skipped_cycles = j.at("skipped_cycles");
  if (j.contains("l2_window_mean")) r.l2_window_mean = j.at("l2_window_mean");
  return r;
}

void save_result(const ExperimentResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = "aai-result-v1";
  j["config"] = to_json(result.config);
  nlohmann::json reports = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [name, report] : result.reports) {
    reports[name] = report_to_json(report);
    order.push_back(name);
  }
  j["reports"] = reports;
  j["condition_order"] = order;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write result: " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentResult load_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open result: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("result parse error: " + std::string(e.what()));
  }
  ExperimentResult result;
  result.config = config_from_json(j.at("config"));
  for (const auto& name : j.at("condition_order"))
    result.reports.emplace_back(name.get<std::string>(),
                                report_from_json(j.at("reports").at(name.get<std::string>())));
  return result;
}

std::string render_table(const ExperimentResult& result) {
  std::ostringstream os;
  os << std::fixed;
  os << std::setw(14) << std::left << "condition"
     << "  GCI: " << std::setw(6) << "IDR%" << std::setw(6) << "MR%" << std::setw(6) << "FAR%"
     << std::setw(8) << "IDA ms"
     << "  GOI: " << std::setw(6) << "IDR%" << std::setw(6) << "MR%" << std::setw(6) << "FAR%"
     << std::setw(8) << "IDA ms"
     << "  CQ t/e" << std::setw(12) << ""
     << "OQ t/e" << std::setw(12) << ""
     << "SQ t/e" << std::setw(12) << ""
     << "HNR t/e" << '\n';
  for (const auto& [name, r] : result.reports) {
    os << std::setw(14) << std::left << name << "       ";
    os << std::setprecision(2);
    os << std::setw(6) << r.gci.idr << std::setw(6) << r.gci.mr << std::setw(6) << r.gci.far
       << std::setw(8) << r.gci.ida_ms << "       " << std::setw(6) << r.goi.idr << std::setw(6)
       << r.goi.mr << std::setw(6) << r.goi.far << std::setw(8) << r.goi.ida_ms << "  ";
    os << std::setw(5) << r.truth.cq << '/' << std::setw(8) << std::left << r.estimated.cq
       << "    " << std::setw(5) << r.truth.oq << '/' << std::setw(8) << r.estimated.oq << "    "
       << std::setw(5) << r.truth.sq << '/' << std::setw(8) << r.estimated.sq << "    "
       << std::setw(5) << r.truth.hnr << '/' << r.estimated.hnr << '\n';
  }
  return os.str();
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series) {
  const double width = 640, height = 420;
  const double ml = 64, mr = 24, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

  std::ofstream out(path);
  if (!out) throw DataError("cannot write plot: " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='22' text-anchor='middle' font-size='15' "
      << "font-family='sans-serif'>" << title << "</text>\n";

  // Axes with 5 ticks each.
  out << "<g stroke='#333' stroke-width='1'>";
  out << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
      << "'/>";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph << "'/>";
  out << "</g>\n";
  out << std::setprecision(4);
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << px(fx) << "' y='" << mt + ph + 18
        << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << fx
        << "</text>\n";
    out << "<text x='" << ml - 8 << "' y='" << py(fy) + 4
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fy << "</text>\n";
    out << "<line x1='" << px(fx) << "' y1='" << mt + ph << "' x2='" << px(fx) << "' y2='"
        << mt + ph + 4 << "' stroke='#333'/>\n";
    out << "<line x1='" << ml - 4 << "' y1='" << py(fy) << "' x2='" << ml << "' y2='" << py(fy)
        << "' stroke='#333'/>\n";
  }
  out << "<text x='" << ml + pw / 2 << "' y='" << height - 10
      << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << x_label
      << "</text>\n";
  out << "<text x='16' y='" << mt + ph / 2
      << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 16 "
      << mt + ph / 2 << ")'>" << y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 5];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (const auto& [x, y] : series[s].points) out << px(x) << ',' << py(y) << ' ';
    out << "'/>\n";
    for (const auto& [x, y] : series[s].points)
      out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << color
          << "'/>\n";
    out << "<text x='" << ml + pw - 8 << "' y='" << mt + 16 + 16 * s
        << "' text-anchor='end' font-size='12' font-family='sans-serif' fill='" << color << "'>"
        << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

std::vector<std::filesystem::path> write_result_plots(const ExperimentResult& result,
                                                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  struct MetricDef {
    const char* name;
    double (*get)(const MetricsReport&);
  };
  static const MetricDef kMetrics[] = {
      {"gci_idr", [](const MetricsReport& r) { return r.gci.idr; }},
      {"gci_mr", [](const MetricsReport& r) { return r.gci.mr; }},
      {"gci_far", [](const MetricsReport& r) { return r.gci.far; }},
      {"gci_ida_ms", [](const MetricsReport& r) { return r.gci.ida_ms; }},
      {"goi_idr", [](const MetricsReport& r) { return r.goi.idr; }},
  };

  for (const auto& metric : kMetrics) {
    std::vector<PlotSeries> series;
    const MetricsReport* clean = nullptr;
    for (const auto& [name, report] : result.reports)
      if (name == "clean") clean = &report;

    for (const char* kind : {"white", "babble"}) {
      PlotSeries s;
      s.name = kind;
      for (const auto& [name, report] : result.reports) {
        const std::string prefix = std::string(kind) + "@";
        if (name.rfind(prefix, 0) != 0) continue;
        const double snr = std::stod(name.substr(prefix.size()));
        s.points.emplace_back(snr, metric.get(report));
      }
      std::sort(s.points.begin(), s.points.end());
      if (!s.points.empty()) series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    if (clean) {
      PlotSeries s;
      s.name = "clean";
      double lo = series[0].points.front().first, hi = series[0].points.back().first;
      s.points = {{lo, metric.get(*clean)}, {hi, metric.get(*clean)}};
      series.push_back(std::move(s));
    }
    const auto path = dir / (std::string("plot_") + metric.name + ".svg");
    write_svg_plot(path, std::string(metric.name) + " vs SNR", "SNR (dB)", metric.name, series);
    written.push_back(path);
  }
  return written;
}

}  // namespace aai
