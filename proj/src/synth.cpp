#include "aai/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "aai/errors.hpp"
#include "aai/preprocess.hpp"
#include "aai/rng.hpp"
#include "json.hpp"

namespace aai {

namespace {

constexpr double kPi = std::numbers::pi;

// How hard the phase accelerates into a closure/opening event, and how much
// it lingers around the open-phase extremum, relative to the harmonic mean
// of the adjacent segments' natural rates. Closures are faster than
// openings across the whole parameter box: the dominant dEGG peaks must be
// the falls, as in real EGG.
constexpr double kGciRateGain = 2.0;
constexpr double kGoiRateGain = 1.25;
constexpr double kPeakRateGain = 0.6;
// Monotonicity bound of the three-harmonic schedule: the two endpoint
// slopes of a segment must sum to at most this.
constexpr double kSlopeSumLimit = 3.9;
// The final cycle of a region decays over this multiple of its closing time.
constexpr double kTaperStretch = 6.0;

void validate_cycle(const GlottalCycleSpec& c) {
  if (!(c.period > 0.0)) throw ConfigError("cycle period must be positive");
  if (!(c.cq > 0.0 && c.cq < 1.0)) throw ConfigError("cq must be in (0, 1)");
  if (!(c.sq > 0.0)) throw ConfigError("sq must be positive");
  if (!(c.amplitude > 0.0)) throw ConfigError("cycle amplitude must be positive");
}

double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

// One monotone phase segment. The normalized schedule
//   sigma(u) = u + (c1/pi) sin(pi u) + (c2/(2 pi)) sin(2 pi u)
//            + (c3/(3 pi)) sin(3 pi u)
// has sigma(0)=0, sigma(1)=1, endpoint slopes a and b, and zero endpoint
// second derivatives, which makes the derivative of the rendered waveform
// smooth exactly at the epochs (where quadratic peak refinement happens).
// The third harmonic, split Fejer-style 3:1 against the first, keeps the
// schedule monotone for endpoint slopes up to about 3x the natural rate.
struct Segment {
  double t0 = 0.0;
  double dur = 0.0;
  double theta0 = 0.0;
  double dtheta = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double amplitude = 1.0;
  bool taper = false;

  double value(double t) const {
    const double u = (t - t0) / dur;
    if (taper) return amplitude * 0.5 * (1.0 + std::cos(kPi * u));
    const double sigma = u + c1 / kPi * std::sin(kPi * u) +
                         c2 / (2.0 * kPi) * std::sin(2.0 * kPi * u) +
                         c3 / (3.0 * kPi) * std::sin(3.0 * kPi * u);
    return -amplitude * std::cos(theta0 + dtheta * sigma);
  }
};

Segment make_segment(double t0, double dur, double theta0, double dtheta, double slope0,
                     double slope1, double amplitude) {
  Segment s;
  s.t0 = t0;
  s.dur = dur;
  s.theta0 = theta0;
  s.dtheta = dtheta;
  s.c1 = 0.375 * (slope0 - slope1);
  s.c2 = 0.5 * (slope0 + slope1) - 1.0;
  s.c3 = 0.125 * (slope0 - slope1);
  s.amplitude = amplitude;
  return s;
}

struct RegionLayout {
  std::vector<Segment> segments;
  double duration = 0.0;  // includes the final taper
  std::vector<double> gci, goi;
  std::vector<SynthUtteranceTruth::Cycle> cycles;
};

// Phase plan per cycle: contact [gci, goi] sweeps -pi/2 -> pi/2 (value runs
// 0 -> -amp -> 0), opening [goi, peak] sweeps pi/2 -> pi (0 -> +amp),
// closing [peak, next gci] sweeps pi -> 3 pi/2. The last cycle replaces the
// closing sweep with a slow half-cosine taper so a region has exactly one
// closure event per cycle.
RegionLayout layout_region(const std::vector<GlottalCycleSpec>& cycles) {
  if (cycles.empty()) throw ConfigError("empty cycle list");
  for (const auto& c : cycles) validate_cycle(c);

  const std::size_t m = cycles.size();
  struct CycleGeom {
    double q, o, c;             // contact / opening / closing durations
    double r_con, r_op, r_cl;   // natural phase rates
  };
  std::vector<CycleGeom> g(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& spec = cycles[k];
    CycleGeom& gk = g[k];
    gk.q = spec.cq * spec.period;
    const double open = spec.period - gk.q;
    gk.o = open * spec.sq / (1.0 + spec.sq);
    gk.c = open / (1.0 + spec.sq);
    gk.r_con = kPi / gk.q;
    gk.r_op = (kPi / 2.0) / gk.o;
    gk.r_cl = (kPi / 2.0) / gk.c;
  }

  // Junction phase rates. The phase derivative at the open-phase extremum
  // does not affect the waveform slope there (sin(pi) = 0), so the last
  // cycle keeps the regular rate and stays shape-identical to interior
  // cycles up to its taper. Closure rates are clamped so both adjoining
  // segments stay within the schedule's monotone range.
  std::vector<double> rate_gci(m), rate_goi(m), rate_peak(m);
  for (std::size_t k = 0; k < m; ++k) {
    rate_goi[k] = kGoiRateGain * harmonic_mean(g[k].r_con, g[k].r_op);
    rate_peak[k] = kPeakRateGain * harmonic_mean(g[k].r_op, g[k].r_cl);
  }
  for (std::size_t k = 0; k < m; ++k) {
    double r = kGciRateGain * (k == 0 ? g[k].r_con : harmonic_mean(g[k - 1].r_cl, g[k].r_con));
    r = std::min(r, kSlopeSumLimit * g[k].r_con - rate_goi[k]);
    if (k > 0) r = std::min(r, kSlopeSumLimit * g[k - 1].r_cl - rate_peak[k - 1]);
    rate_gci[k] = r;
  }

  RegionLayout out;
  double t = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& spec = cycles[k];
    const CycleGeom& gk = g[k];
    const double amp = spec.amplitude;
    const bool last = (k + 1 == m);

    out.gci.push_back(t);
    out.goi.push_back(t + gk.q);
    out.cycles.push_back({spec.cq, 1.0 - spec.cq, spec.sq});

    out.segments.push_back(make_segment(t, gk.q, -kPi / 2.0, kPi, rate_gci[k] / gk.r_con,
                                        rate_goi[k] / gk.r_con, amp));
    t += gk.q;
    out.segments.push_back(make_segment(t, gk.o, kPi / 2.0, kPi / 2.0, rate_goi[k] / gk.r_op,
                                        rate_peak[k] / gk.r_op, amp));
    t += gk.o;
    if (last) {
      Segment taper;
      taper.t0 = t;
      taper.dur = kTaperStretch * gk.c;
      taper.amplitude = amp;
      taper.taper = true;
      out.segments.push_back(taper);
      t += taper.dur;
    } else {
      out.segments.push_back(make_segment(t, gk.c, kPi, kPi / 2.0, rate_peak[k] / gk.r_cl,
                                          rate_gci[k + 1] / gk.r_cl, amp));
      t += gk.c;
    }
  }
  out.duration = t;
  return out;
}

void render_region(const RegionLayout& layout, double region_start, Waveform& egg) {
  const double rate = egg.rate;
  const std::size_t n0 =
      static_cast<std::size_t>(std::max(0.0, std::ceil(region_start * rate)));
  std::size_t seg = 0;
  for (std::size_t n = n0; n < egg.samples.size(); ++n) {
    const double t = static_cast<double>(n) / rate - region_start;
    if (t >= layout.duration) break;
    while (seg + 1 < layout.segments.size() &&
           t >= layout.segments[seg].t0 + layout.segments[seg].dur)
      ++seg;
    egg.samples[n] = layout.segments[seg].value(t);
  }
}

}  // namespace

std::pair<Waveform, SynthUtteranceTruth> synth_egg(const std::vector<GlottalCycleSpec>& cycles,
                                                   double rate) {
  if (rate <= 0.0) throw ConfigError("non-positive sample rate");
  RegionLayout layout = layout_region(cycles);

  Waveform egg;
  egg.rate = rate;
  egg.role = ChannelRole::Egg;
  egg.samples.assign(static_cast<std::size_t>(std::ceil(layout.duration * rate)), 0.0);
  render_region(layout, 0.0, egg);

  SynthUtteranceTruth truth;
  truth.gci = layout.gci;
  truth.goi = layout.goi;
  truth.cycles = layout.cycles;
  truth.voiced.emplace_back(0.0, layout.duration);
  return {std::move(egg), std::move(truth)};
}

Waveform synth_speech_from_egg(const Waveform& egg, const std::vector<Formant>& formants,
                               std::uint64_t seed) {
  if (formants.empty()) throw ConfigError("at least one formant required");
  for (const auto& f : formants) {
    if (f.center_hz >= egg.rate / 2.0) throw ConfigError("formant above Nyquist");
    if (f.center_hz <= 0.0 || f.bandwidth_hz <= 0.0) throw ConfigError("invalid formant");
  }
  if (egg.samples.empty()) throw DataError("empty EGG input");

  const std::size_t n = egg.samples.size();
  const double rate = egg.rate;

  // Differentiated-EGG excitation.
  std::vector<double> exc(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) exc[i] = (egg.samples[i + 1] - egg.samples[i]) * rate;

  // Voiced gate from a short-range envelope of |egg|.
  double peak = 0.0;
  for (double s : egg.samples) peak = std::max(peak, std::abs(s));
  const int half = static_cast<int>(std::lround(0.0025 * rate));
  std::vector<bool> voiced(n, false);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - half : 0;
      const std::size_t hi = std::min(n - 1, i + half);
      double env = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) env = std::max(env, std::abs(egg.samples[j]));
      voiced[i] = env > 1e-6 * peak;
    }
  }

  double exc_energy = 0.0;
  std::size_t voiced_count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (voiced[i]) {
      exc_energy += exc[i] * exc[i];
      ++voiced_count;
    }
  if (voiced_count > 0 && exc_energy > 0.0) {
    const double inv_rms = 1.0 / std::sqrt(exc_energy / static_cast<double>(voiced_count));
    for (double& e : exc) e *= inv_rms;
  }

  // Aspiration in the unvoiced spans.
  Rng rng(mix_seed(seed, 0x61737069ULL));
  for (std::size_t i = 0; i < n; ++i)
    if (!voiced[i]) exc[i] += 0.05 * rng.normal();

  // Two-pole resonator cascade.
  std::vector<double> y = std::move(exc);
  for (const auto& f : formants) {
    const double r = std::exp(-kPi * f.bandwidth_hz / rate);
    const double a1 = 2.0 * r * std::cos(2.0 * kPi * f.center_hz / rate);
    const double a2 = -r * r;
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = y[i] + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = v;
      y[i] = v;
    }
  }

  Waveform speech;
  speech.rate = rate;
  speech.role = ChannelRole::Speech;
  speech.samples = std::move(y);
  double sp_peak = 0.0;
  for (double s : speech.samples) sp_peak = std::max(sp_peak, std::abs(s));
  if (sp_peak > 0.0) {
    const double scale = 0.95 / sp_peak;
    for (double& s : speech.samples) s *= scale;
  }
  return speech;
}

namespace {

std::string utt_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "utt%04d", i);
  return buf;
}

}  // namespace

DatasetManifest synth_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.count < 0) throw ConfigError("corpus count must be non-negative");
  if (cfg.f0_min >= cfg.f0_max) throw ConfigError("inverted pitch range");
  if (cfg.cq_min >= cfg.cq_max || cfg.cq_min <= 0.0 || cfg.cq_max >= 1.0)
    throw ConfigError("invalid cq range");
  if (cfg.sq_min >= cfg.sq_max || cfg.sq_min <= 0.0) throw ConfigError("invalid sq range");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    throw DataError("cannot create output directory: " + out_dir.string());

  DatasetManifest manifest;
  manifest.rate = cfg.rate;
  manifest.dir = out_dir;

  const int n_train = static_cast<int>(std::lround(cfg.train_frac * cfg.count));
  const int n_val = static_cast<int>(std::lround(cfg.val_frac * cfg.count));

  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const std::string id = utt_id(i);

    // Per-utterance voice settings.
    const double f0_base =
        std::exp(rng.uniform(std::log(cfg.f0_min * 1.02), std::log(cfg.f0_max * 0.98)));
    const double f0_glide = rng.uniform(-0.10, 0.10);  // relative drift over the utterance
    const double cq_base = rng.uniform(cfg.cq_min + 0.02, cfg.cq_max - 0.02);
    const double sq_base = rng.uniform(cfg.sq_min + 0.05, cfg.sq_max - 0.10);
    const std::vector<Formant> formants = {
        {rng.uniform(300.0, 850.0), rng.uniform(60.0, 110.0)},
        {rng.uniform(950.0, 2200.0), rng.uniform(90.0, 160.0)},
        {rng.uniform(2300.0, 3100.0), rng.uniform(120.0, 220.0)},
    };

    const int n_regions = cfg.regions_min + static_cast<int>(rng.index(
                               static_cast<std::size_t>(cfg.regions_max - cfg.regions_min + 1)));

    SynthUtteranceTruth truth;
    std::vector<std::pair<double, RegionLayout>> regions;
    double t = rng.uniform(0.05, 0.10);  // lead-in silence
    double total_planned = t;
    for (int rgn = 0; rgn < n_regions; ++rgn) {
      const double dur_target = rng.uniform(cfg.region_s_min, cfg.region_s_max);
      std::vector<GlottalCycleSpec> cycles;
      double rt = 0.0;
      while (rt < dur_target) {
        const double progress = std::min(1.0, (t + rt - 0.05) / 1.2);
        const double f0 = f0_base * (1.0 + f0_glide * progress) * (1.0 + rng.uniform(-0.003, 0.003));
        GlottalCycleSpec c;
        c.period = 1.0 / f0;
        c.cq = std::clamp(cq_base + rng.uniform(-0.015, 0.015), cfg.cq_min, cfg.cq_max);
        c.sq = std::clamp(sq_base + rng.uniform(-0.05, 0.05), cfg.sq_min, cfg.sq_max);
        c.amplitude = rng.uniform(0.85, 1.0);
        cycles.push_back(c);
        rt += c.period;
      }
      RegionLayout layout = layout_region(cycles);
      for (double v : layout.gci) truth.gci.push_back(t + v);
      for (double v : layout.goi) truth.goi.push_back(t + v);
      truth.cycles.insert(truth.cycles.end(), layout.cycles.begin(), layout.cycles.end());
      truth.voiced.emplace_back(t, t + layout.duration);
      const double dur = layout.duration;
      regions.emplace_back(t, std::move(layout));
      t += dur + rng.uniform(cfg.gap_s_min, cfg.gap_s_max);
      total_planned = t;
    }
    total_planned += rng.uniform(0.04, 0.08);  // trailing silence

    Waveform egg;
    egg.rate = cfg.rate;
    egg.role = ChannelRole::Egg;
    egg.samples.assign(static_cast<std::size_t>(std::ceil(total_planned * cfg.rate)), 0.0);
    for (const auto& [start, layout] : regions) render_region(layout, start, egg);

    Waveform speech = synth_speech_from_egg(egg, formants, mix_seed(cfg.seed, 0x5350u + i));
    // Store in canonical polarity (non-positive slope skewness), as recorded
    // corpora are polarity-corrected before use.
    if (slope_skewness(speech) > 0.0)
      for (double& s : speech.samples) s = -s;

    const std::string speech_name = id + "_speech.wav";
    const std::string egg_name = id + "_egg.wav";
    write_wav(speech, out_dir / speech_name, WavEncoding::Float32);
    write_wav(egg, out_dir / egg_name, WavEncoding::Float32);
    save_truth(truth, out_dir / (id + "_truth.json"));

    const std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    manifest.entries.push_back({id, speech_name, egg_name, split});
  }

  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void save_truth(const SynthUtteranceTruth& truth, const std::filesystem::path& path) {
  nlohmann::json j;
  j["gci"] = truth.gci;
  j["goi"] = truth.goi;
  auto& voiced = j["voiced"] = nlohmann::json::array();
  for (const auto& [s, e] : truth.voiced) voiced.push_back({s, e});
  auto& cycles = j["cycles"] = nlohmann::json::array();
  for (const auto& c : truth.cycles)
    cycles.push_back({{"cq", c.cq}, {"oq", c.oq}, {"sq", c.sq}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write truth file: " + path.string());
  out << j.dump(2) << '\n';
}

SynthUtteranceTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open truth file: " + path.string());
  nlohmann::json j;
  in >> j;
  SynthUtteranceTruth truth;
  truth.gci = j.at("gci").get<std::vector<double>>();
  truth.goi = j.at("goi").get<std::vector<double>>();
  for (const auto& v : j.at("voiced")) truth.voiced.emplace_back(v.at(0), v.at(1));
  for (const auto& c : j.at("cycles"))
    truth.cycles.push_back({c.at("cq"), c.at("oq"), c.at("sq")});
  return truth;
}

}  // namespace aai
