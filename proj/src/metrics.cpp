#include "aai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aai/errors.hpp"

namespace aai {

bool VoicingMask::is_voiced(double t) const {
  for (const auto& [s, e] : regions)
    if (t >= s && t < e) return true;
  return false;
}

double VoicingMask::total_duration() const {
  double acc = 0.0;
  for (const auto& [s, e] : regions) acc += e - s;
  return acc;
}

VoicingMask detect_voicing(const Waveform& w, const VoicingOptions& opt) {
  VoicingMask mask;
  if (w.samples.empty()) return mask;
  const std::size_t win = std::max<std::size_t>(1, std::lround(opt.window_s * w.rate));
  const std::size_t hop = std::max<std::size_t>(1, std::lround(opt.hop_s * w.rate));
  if (w.samples.size() < win) return mask;

  std::vector<double> energy;
  std::vector<double> center;
  for (std::size_t start = 0; start + win <= w.samples.size(); start += hop) {
    double e = 0.0;
    for (std::size_t i = start; i < start + win; ++i) e += w.samples[i] * w.samples[i];
    energy.push_back(e / static_cast<double>(win));
    center.push_back((static_cast<double>(start) + win / 2.0) / w.rate);
  }

  std::vector<double> sorted = energy;
  std::sort(sorted.begin(), sorted.end());
  const double robust_max = sorted[static_cast<std::size_t>(0.95 * (sorted.size() - 1))];
  const double threshold = opt.rel_threshold * robust_max;
  if (robust_max <= 0.0) return mask;

  const double half_hop = opt.hop_s / 2.0;
  std::vector<std::pair<double, double>> raw;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] <= threshold) continue;
    const double s = center[i] - half_hop;
    const double e = center[i] + half_hop;
    if (!raw.empty() && s <= raw.back().second + 1e-9)
      raw.back().second = e;
    else
      raw.emplace_back(s, e);
  }

  // Drop sub-minimum regions, then merge across short gaps.
  std::vector<std::pair<double, double>> kept;
  for (const auto& r : raw)
    if (r.second - r.first >= opt.min_region_s) kept.push_back(r);
  for (const auto& r : kept) {
    if (!mask.regions.empty() && r.first - mask.regions.back().second < opt.merge_gap_s)
      mask.regions.back().second = r.second;
    else
      mask.regions.push_back(r);
  }
  const double dur = w.duration();
  for (auto& r : mask.regions) {
    r.first = std::max(0.0, r.first);
    r.second = std::min(dur, r.second);
  }
  return mask;
}

Waveform degg(const Waveform& egg) {
  if (egg.samples.size() < 2) throw DataError("signal too short to differentiate");
  Waveform d;
  d.rate = egg.rate;
  d.role = egg.role;
  const std::size_t n = egg.samples.size() - 1;
  d.samples.resize(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i)
    d.samples[i] = (egg.samples[i + 1] - egg.samples[i]) * egg.rate;
  return d;
}

namespace {

struct Peak {
  double t;
  double value;  // signed detection-domain dEGG value
};

// Zero-phase triangular smoother (two moving-average passes). Out-of-range
// samples count as zero.
std::vector<double> triangular_smooth(const std::vector<double>& x, int half) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size(), 0.0);
  const double norm = static_cast<double>((half + 1) * (half + 1));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
      const std::ptrdiff_t k = i + j;
      if (k < 0 || k >= n) continue;
      acc += x[k] * static_cast<double>(half + 1 - std::abs(j));
    }
    out[i] = acc / norm;
  }
  return out;
}

// Quadratic vertex around sample k, clamped to +-0.5 sample; dEGG sample k
// sits at (k + 0.5)/rate.
double vertex_time(const std::vector<double>& d, std::size_t k, double rate) {
  double delta = 0.0;
  if (k > 0 && k + 1 < d.size()) {
    const double denom = d[k - 1] - 2.0 * d[k] + d[k + 1];
    if (denom != 0.0) delta = std::clamp(0.5 * (d[k - 1] - d[k + 1]) / denom, -0.5, 0.5);
  }
  return (static_cast<double>(k) + 0.5 + delta) / rate;
}

// Peaks are found on the heavily smoothed derivative (noise robustness) and
// their instants refined on the lightly smoothed one (timing accuracy).
std::vector<Peak> pick_peaks(const std::vector<double>& det, const std::vector<double>& ref,
                             double rate, std::size_t lo, std::size_t hi, double threshold,
                             double min_dist_s, int sign) {
  std::vector<std::size_t> cand;
  for (std::size_t i = std::max<std::size_t>(lo, 1); i + 1 < hi; ++i) {
    const double v = sign * det[i];
    if (v < threshold) continue;
    if (v > sign * det[i - 1] && v >= sign * det[i + 1]) cand.push_back(i);
  }
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return sign * det[a] > sign * det[b] || (det[a] == det[b] && a < b);
  });
  std::vector<Peak> kept;
  for (std::size_t i : cand) {
    const double t_det = (static_cast<double>(i) + 0.5) / rate;
    bool suppressed = false;
    for (const auto& p : kept)
      if (std::abs(p.t - t_det) < min_dist_s) {
        suppressed = true;
        break;
      }
    if (suppressed) continue;
    // re-localize on the refinement signal (detection smoothing can smear a
    // narrow peak by several samples)
    std::size_t best = i;
    const std::size_t rlo = i >= 8 ? i - 8 : 0;
    const std::size_t rhi = std::min(ref.size() - 1, i + 8);
    for (std::size_t k = rlo; k <= rhi; ++k)
      if (sign * ref[k] > sign * ref[best]) best = k;
    kept.push_back({vertex_time(ref, best, rate), det[i]});
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return a.t < b.t; });
  return kept;
}

}  // namespace

EpochSet extract_epochs(const Waveform& egg, const VoicingMask& voicing,
                        const EpochOptions& opt) {
  EpochSet out;
  if (voicing.empty() || egg.samples.size() < 3) return out;
  const Waveform d = degg(egg);
  const std::vector<double> d_det = triangular_smooth(d.samples, 8);
  const std::vector<double> d_ref = triangular_smooth(d.samples, 2);

  for (const auto& [rs, re] : voicing.regions) {
    // dEGG sample k is at (k + 0.5)/rate.
    const auto lo = static_cast<std::size_t>(
        std::clamp(std::floor(rs * egg.rate - 0.5), 0.0, double(d_det.size())));
    const auto hi = static_cast<std::size_t>(
        std::clamp(std::ceil(re * egg.rate - 0.5), 0.0, double(d_det.size())));
    if (hi <= lo + 2) continue;

    // Robust per-region peak scale: 95th percentile of the smoothed |dEGG|
    // at its local extrema.
    std::vector<double> mags;
    for (std::size_t i = lo + 1; i + 1 < hi; ++i) {
      const double a = std::abs(d_det[i]);
      if (a > std::abs(d_det[i - 1]) && a >= std::abs(d_det[i + 1]) && a > 0.0)
        mags.push_back(a);
    }
    if (mags.empty()) continue;
    std::sort(mags.begin(), mags.end());
    const double scale = mags[static_cast<std::size_t>(0.95 * (mags.size() - 1))];
    const double threshold = opt.alpha * scale;
    if (threshold <= 0.0) continue;

    auto gci = pick_peaks(d_det, d_ref, egg.rate, lo, hi, threshold, opt.min_period_s, -1);
    auto goi = pick_peaks(d_det, d_ref, egg.rate, lo, hi, threshold, opt.min_period_s, +1);

    for (const auto& p : gci) out.gci.push_back(p.t);

    // Keep at most one GOI between consecutive GCIs (largest peak).
    std::size_t g = 0;
    for (std::size_t k = 0; k + 1 <= gci.size(); ++k) {
      const double left = gci[k].t;
      const double right = k + 1 < gci.size() ? gci[k + 1].t : re;
      const Peak* best = nullptr;
      while (g < goi.size() && goi[g].t < right) {
        if (goi[g].t > left && (best == nullptr || goi[g].value > best->value)) best = &goi[g];
        ++g;
      }
      if (best != nullptr) out.goi.push_back(best->t);
    }
  }
  std::sort(out.gci.begin(), out.gci.end());
  std::sort(out.goi.begin(), out.goi.end());
  return out;
}

void DetectionTally::add(const DetectionTally& o) {
  identified += o.identified;
  missed += o.missed;
  false_alarm += o.false_alarm;
  errors_s.insert(errors_s.end(), o.errors_s.begin(), o.errors_s.end());
}

DetectionScore DetectionTally::score() const {
  DetectionScore s;
  s.cycles = identified + missed + false_alarm;
  if (s.cycles == 0) return s;
  const double n = static_cast<double>(s.cycles);
  s.idr = 100.0 * identified / n;
  s.mr = 100.0 * missed / n;
  s.far = 100.0 * false_alarm / n;
  if (!errors_s.empty()) {
    double mean = 0.0;
    for (double e : errors_s) mean += e;
    mean /= static_cast<double>(errors_s.size());
    double var = 0.0;
    for (double e : errors_s) var += (e - mean) * (e - mean);
    var /= static_cast<double>(errors_s.size());
    s.ida_ms = std::sqrt(var) * 1000.0;
  }
  return s;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

namespace {

struct Cycle {
  double lo, hi;
  double target;
};

// Count detections per cycle: one = identification, none = miss, several =
// false alarm. Cycles partition the scored span, so every class is counted
// exactly once and IDR + MR + FAR == 100.
DetectionTally count_in_cycles(const std::vector<Cycle>& cycles,
                               const std::vector<double>& detected) {
  DetectionTally tally;
  std::size_t e = 0;
  for (const auto& c : cycles) {
    while (e < detected.size() && detected[e] < c.lo) ++e;
    std::size_t count = 0;
    double err = 0.0;
    std::size_t e2 = e;
    while (e2 < detected.size() && detected[e2] < c.hi) {
      err = detected[e2] - c.target;
      ++count;
      ++e2;
    }
    if (count == 0)
      ++tally.missed;
    else if (count == 1) {
      ++tally.identified;
      tally.errors_s.push_back(err);
    } else
      ++tally.false_alarm;
  }
  return tally;
}

}  // namespace

DetectionTally tally_detection(const EpochSet& ref, const EpochSet& est, EpochKind kind) {
  const std::vector<double>& targets = kind == EpochKind::Gci ? ref.gci : ref.goi;
  const std::vector<double>& detected = kind == EpochKind::Gci ? est.gci : est.goi;
  if (targets.empty()) throw DataError("empty reference epoch set");

  // Reference cycles are delimited by the reference GCIs in both tasks.
  std::vector<double> periods;
  for (std::size_t i = 1; i < ref.gci.size(); ++i)
    periods.push_back(ref.gci[i] - ref.gci[i - 1]);
  const double guard = periods.empty() ? 0.005 : 0.5 * median(periods);

  std::vector<Cycle> cycles;
  if (kind == EpochKind::Gci) {
    // Spans between consecutive instants split at their midpoints, plus
    // half-period guards at the utterance ends.
    const std::size_t n = targets.size();
    for (std::size_t k = 0; k < n; ++k) {
      Cycle c;
      c.lo = k == 0 ? targets[0] - guard : 0.5 * (targets[k - 1] + targets[k]);
      c.hi = k + 1 == n ? targets[n - 1] + guard : 0.5 * (targets[k] + targets[k + 1]);
      c.target = targets[k];
      cycles.push_back(c);
    }
  } else {
    // GCI-to-GCI intervals that contain exactly one reference GOI.
    const auto& g = ref.gci;
    std::size_t k = 0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double left = c == 0 ? g[0] - guard : g[c];
      const double right = c + 1 < g.size() ? g[c + 1] : g.back() + 2.0 * guard;
      while (k < targets.size() && targets[k] < left) ++k;
      if (k < targets.size() && targets[k] < right) cycles.push_back({left, right, targets[k++]});
    }
    if (cycles.empty()) throw DataError("no reference GOI falls inside a GCI cycle");
  }
  return count_in_cycles(cycles, detected);
}

DetectionScore score_detection(const EpochSet& ref, const EpochSet& est, EpochKind kind) {
  return tally_detection(ref, est, kind).score();
}

CycleExtraction cycle_metrics(const EpochSet& epochs, const Waveform& egg,
                              const CycleOptions& opt) {
  CycleExtraction out;
  const auto& g = epochs.gci;
  std::size_t goi_idx = 0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double t0 = g[k];
    const double t1 = g[k + 1];
    const double period = t1 - t0;
    if (period > opt.max_period_s) {
      ++out.skipped;
      continue;
    }
    while (goi_idx < epochs.goi.size() && epochs.goi[goi_idx] <= t0) ++goi_idx;
    if (goi_idx >= epochs.goi.size() || epochs.goi[goi_idx] >= t1) {
      ++out.skipped;
      continue;
    }
    const double goi = epochs.goi[goi_idx];

    // Open-phase extremum (maximum glottal opening).
    const auto lo = static_cast<std::size_t>(std::ceil(goi * egg.rate));
    const auto hi = std::min(egg.samples.size(),
                             static_cast<std::size_t>(std::floor(t1 * egg.rate)) + 1);
    if (hi <= lo + 2) {
      ++out.skipped;
      continue;
    }
    std::size_t peak_k = lo;
    for (std::size_t i = lo; i < hi; ++i)
      if (egg.samples[i] > egg.samples[peak_k]) peak_k = i;
    double delta = 0.0;
    if (peak_k > 0 && peak_k + 1 < egg.samples.size()) {
      const double denom =
          egg.samples[peak_k - 1] - 2.0 * egg.samples[peak_k] + egg.samples[peak_k + 1];
      if (denom != 0.0)
        delta = std::clamp(
            0.5 * (egg.samples[peak_k - 1] - egg.samples[peak_k + 1]) / denom, -0.5, 0.5);
    }
    const double t_peak = (static_cast<double>(peak_k) + delta) / egg.rate;
    if (t_peak <= goi || t_peak >= t1) {
      ++out.skipped;
      continue;
    }

    CycleMetrics m;
    m.cycle_start = t0;
    m.cycle_end = t1;
    m.cq = (goi - t0) / period;
    m.oq = 1.0 - m.cq;
    m.sq = (t_peak - goi) / (t1 - t_peak);
    out.cycles.push_back(m);
  }
  return out;
}

double hnr(const Waveform& egg, const VoicingMask& voicing, const HnrOptions& opt) {
  EpochSet epochs = extract_epochs(egg, voicing);
  double weighted = 0.0;
  double total_weight = 0.0;

  for (const auto& [rs, re] : voicing.regions) {
    std::vector<double> gcis;
    for (double t : epochs.gci)
      if (t >= rs && t < re) gcis.push_back(t);
    if (static_cast<int>(gcis.size()) < opt.min_cycles + 1) continue;

    // Keep only plausible cycles: spans within [0.6, 1.66] of the median
    // period (spurious or missed instants otherwise corrupt the template).
    std::vector<double> spans;
    for (std::size_t i = 1; i < gcis.size(); ++i) spans.push_back(gcis[i] - gcis[i - 1]);
    const double med = median(spans);
    std::vector<double> anchors;
    double mean_period = 0.0;
    for (std::size_t i = 1; i < gcis.size(); ++i) {
      const double span = gcis[i] - gcis[i - 1];
      if (span >= 0.6 * med && span <= 1.66 * med) {
        anchors.push_back(gcis[i - 1]);
        mean_period += span;
      }
    }
    if (static_cast<int>(anchors.size()) < opt.min_cycles) continue;
    mean_period /= static_cast<double>(anchors.size());
    const auto len = static_cast<std::size_t>(std::lround(mean_period * egg.rate));
    if (len < 8) continue;

    // One fixed-length window per closure instant, copied sample-for-sample
    // (any interpolation of the raw windows would low-pass the very noise
    // the residual is supposed to measure).
    std::vector<std::vector<double>> cycles;
    for (double t0 : anchors) {
      const auto a = static_cast<std::ptrdiff_t>(std::lround(t0 * egg.rate));
      if (a < 0 || a + static_cast<std::ptrdiff_t>(len) >
                       static_cast<std::ptrdiff_t>(egg.samples.size()))
        continue;
      if ((t0 + static_cast<double>(len) / egg.rate) > re + 1e-9) continue;
      cycles.emplace_back(egg.samples.begin() + a, egg.samples.begin() + a + len);
    }
    if (static_cast<int>(cycles.size()) < opt.min_cycles) continue;
    const std::size_t n_cycles = cycles.size();

    auto wrap = [&](std::ptrdiff_t i) {
      const auto m = static_cast<std::ptrdiff_t>(len);
      return static_cast<std::size_t>(((i % m) + m) % m);
    };
    // Circular Catmull-Rom shift; applied to the (noise-averaged) template
    // and to template construction only.
    auto shifted = [&](const std::vector<double>& v, double s) {
      std::vector<double> out(len);
      for (std::size_t i = 0; i < len; ++i) {
        const double x = static_cast<double>(i) + s;
        const auto k = static_cast<std::ptrdiff_t>(std::floor(x));
        const double u = x - static_cast<double>(k);
        const double p0 = v[wrap(k - 1)], p1 = v[wrap(k)], p2 = v[wrap(k + 1)],
                     p3 = v[wrap(k + 2)];
        out[i] = p1 + 0.5 * u *
                          (p2 - p0 +
                           u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                                u * (3.0 * (p1 - p2) + p3 - p0)));
      }
      return out;
    };

    std::vector<double> tmpl(len, 0.0);
    for (const auto& c : cycles)
      for (std::size_t i = 0; i < len; ++i) tmpl[i] += c[i];
    for (double& v : tmpl) v /= static_cast<double>(n_cycles);

    // Boundary jitter appears as a per-cycle offset: estimate it against the
    // template (integer scan plus correlation-parabola refinement) and
    // rebuild the template from counter-shifted cycles.
    std::vector<double> shifts(n_cycles, 0.0);
    const int scan = std::clamp(static_cast<int>(len / 8), 4, 12);
    for (int pass = 0; pass < 2; ++pass) {
      auto corr_at = [&](const std::vector<double>& c, int s) {
        double corr = 0.0;
        for (std::size_t i = 0; i < len; ++i)
          corr += tmpl[i] * c[wrap(static_cast<std::ptrdiff_t>(i) + s)];
        return corr;
      };
      for (std::size_t ci = 0; ci < n_cycles; ++ci) {
        int best = 0;
        double best_corr = -std::numeric_limits<double>::infinity();
        for (int s = -scan; s <= scan; ++s) {
          const double corr = corr_at(cycles[ci], s);
          if (corr > best_corr) {
            best_corr = corr;
            best = s;
          }
        }
        const double c_lo = corr_at(cycles[ci], best - 1);
        const double c_hi = corr_at(cycles[ci], best + 1);
        const double denom = c_lo - 2.0 * best_corr + c_hi;
        const double frac =
            denom != 0.0 ? std::clamp(0.5 * (c_lo - c_hi) / denom, -0.5, 0.5) : 0.0;
        shifts[ci] = static_cast<double>(best) + frac;
      }
      std::fill(tmpl.begin(), tmpl.end(), 0.0);
      for (std::size_t ci = 0; ci < n_cycles; ++ci) {
        const std::vector<double> aligned = shifted(cycles[ci], shifts[ci]);
        for (std::size_t i = 0; i < len; ++i) tmpl[i] += aligned[i];
      }
      for (double& v : tmpl) v /= static_cast<double>(n_cycles);
    }

    // Residual in the raw domain: untouched window minus the template moved
    // onto it.
    double e_periodic = 0.0, e_noise = 0.0;
    for (std::size_t ci = 0; ci < n_cycles; ++ci) {
      const std::vector<double> aligned_tmpl =
          shifts[ci] != 0.0 ? shifted(tmpl, -shifts[ci]) : tmpl;
      for (std::size_t i = 0; i < len; ++i) {
        e_periodic += tmpl[i] * tmpl[i];
        const double r = cycles[ci][i] - aligned_tmpl[i];
        e_noise += r * r;
      }
    }
    if (e_periodic <= 0.0) continue;

    const double ratio = e_noise > 0.0 ? e_periodic / e_noise : 0.0;
    const double region_hnr =
        e_noise > 0.0 ? std::min(opt.ceiling, std::log10(ratio)) : opt.ceiling;
    const double weight = e_periodic + e_noise;
    weighted += weight * region_hnr;
    total_weight += weight;
  }
  if (total_weight <= 0.0) throw DataError("insufficient cycles for HNR");
  return weighted / total_weight;
}

QuotientSummary summarize_quotients(const std::vector<CycleMetrics>& cycles, double hnr_value) {
  QuotientSummary s;
  s.hnr = hnr_value;
  s.cycle_count = static_cast<long>(cycles.size());
  if (cycles.empty()) return s;
  for (const auto& c : cycles) {
    s.cq += c.cq;
    s.oq += c.oq;
    s.sq += c.sq;
  }
  const double n = static_cast<double>(cycles.size());
  s.cq /= n;
  s.oq /= n;
  s.sq /= n;
  return s;
}

MetricsReport compare_reports(const std::vector<CycleMetrics>& truth_cycles, double truth_hnr,
                              const std::vector<CycleMetrics>& est_cycles, double est_hnr) {
  if (truth_cycles.empty() || est_cycles.empty())
    throw DataError("empty cycle metrics in comparison");
  MetricsReport r;
  r.truth = summarize_quotients(truth_cycles, truth_hnr);
  r.estimated = summarize_quotients(est_cycles, est_hnr);
  return r;
}

}  // namespace aai
