#pragma once

#include <string>
#include <vector>

#include "aai/wave.hpp"

namespace aai {

// Sorted, non-overlapping voiced regions in seconds.
struct VoicingMask {
  std::vector<std::pair<double, double>> regions;

  bool is_voiced(double t) const;
  double total_duration() const;
  bool empty() const { return regions.empty(); }
};

struct VoicingOptions {
  double window_s = 0.025;
  double hop_s = 0.010;
  double rel_threshold = 0.05;  // fraction of the robust (95th pct) frame energy
  double min_region_s = 0.030;
  double merge_gap_s = 0.020;
};

// Short-time energy voicing detector.
VoicingMask detect_voicing(const Waveform& w, const VoicingOptions& opt = {});

// First difference scaled by the rate; sample k sits at time (k + 0.5)/rate.
Waveform degg(const Waveform& egg);

enum class EpochSource { Reference, Estimated };

struct EpochSet {
  std::vector<double> gci;  // seconds, strictly increasing
  std::vector<double> goi;
  EpochSource source = EpochSource::Reference;
};

struct EpochOptions {
  double alpha = 0.3;          // threshold as a fraction of the p95 peak magnitude
  double min_period_s = 0.002; // 500 Hz ceiling
};

// GCIs are negative dEGG peaks, GOIs positive dEGG peaks, both restricted
// to voiced regions and refined to sub-sample accuracy. At most one GOI is
// kept between consecutive GCIs (the largest peak).
EpochSet extract_epochs(const Waveform& egg, const VoicingMask& voicing,
                        const EpochOptions& opt = {});

enum class EpochKind { Gci, Goi };

struct DetectionScore {
  double idr = 0.0;     // % identified
  double mr = 0.0;      // % missed
  double far = 0.0;     // % false alarms
  double ida_ms = 0.0;  // std of timing errors over identified cycles
  long cycles = 0;
};

// Pooled detection counts; utterance tallies sum into dataset scores.
struct DetectionTally {
  long identified = 0;
  long missed = 0;
  long false_alarm = 0;
  std::vector<double> errors_s;  // est - ref over identified cycles

  void add(const DetectionTally& o);
  DetectionScore score() const;
};

DetectionTally tally_detection(const EpochSet& ref, const EpochSet& est, EpochKind kind);
DetectionScore score_detection(const EpochSet& ref, const EpochSet& est, EpochKind kind);

struct CycleMetrics {
  double cycle_start = 0.0;  // seconds (GCI_k)
  double cycle_end = 0.0;    // seconds (GCI_{k+1})
  double cq = 0.0;
  double oq = 0.0;
  double sq = 0.0;
};

struct CycleExtraction {
  std::vector<CycleMetrics> cycles;
  long skipped = 0;  // cycles without a usable GOI / peak, or implausible period
};

struct CycleOptions {
  double max_period_s = 0.020;  // 50 Hz pitch floor; longer "cycles" span gaps
};

// Per-cycle quotients: CQ = (GOI - GCI)/T, OQ = 1 - CQ,
// SQ = (t_peak - GOI)/(GCI_next - t_peak) with t_peak the open-phase
// extremum of the EGG.
CycleExtraction cycle_metrics(const EpochSet& epochs, const Waveform& egg,
                              const CycleOptions& opt = {});

struct HnrOptions {
  int min_cycles = 8;
  double ceiling = 5.0;  // log10 energy-ratio cap
};

// Periodicity measure: log10 of the energy ratio between the
// cycle-synchronous average waveform and the residual, energy-weighted
// across voiced regions. Needs the GCIs implied by the voicing mask.
double hnr(const Waveform& egg, const VoicingMask& voicing, const HnrOptions& opt = {});

// Dataset-level quotient summary: means of per-cycle metrics plus HNR.
struct QuotientSummary {
  double cq = 0.0, oq = 0.0, sq = 0.0, hnr = 0.0;
  long cycle_count = 0;
};

QuotientSummary summarize_quotients(const std::vector<CycleMetrics>& cycles, double hnr_value);

struct MetricsReport {
  std::string dataset;
  DetectionScore gci;
  DetectionScore goi;
  QuotientSummary truth;
  QuotientSummary estimated;
  long skipped_cycles = 0;
  double l2_window_mean = 0.0;  // mean per-window squared error per sample
};

// Dataset-wise true-vs-estimated comparison.
MetricsReport compare_reports(const std::vector<CycleMetrics>& truth_cycles, double truth_hnr,
                              const std::vector<CycleMetrics>& est_cycles, double est_hnr);

}  // namespace aai
