#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "aai/errors.hpp"
#include "aai/metrics.hpp"
#include "aai/rng.hpp"
#include "aai/synth.hpp"

using namespace aai;

namespace {

std::vector<GlottalCycleSpec> repeat_cycle(double period, double cq, double sq, int n,
                                           double amp = 1.0) {
  return std::vector<GlottalCycleSpec>(n, {period, cq, sq, amp});
}

VoicingMask full_mask(const Waveform& w) {
  VoicingMask m;
  m.regions.emplace_back(0.0, w.duration() + 0.01);
  return m;
}

// Silence on both sides, as ingestion always provides; shifts truth times.
std::pair<Waveform, SynthUtteranceTruth> padded(std::pair<Waveform, SynthUtteranceTruth> in,
                                                std::size_t pad = 160) {
  auto& [egg, truth] = in;
  Waveform out;
  out.rate = egg.rate;
  out.role = egg.role;
  out.samples.assign(pad, 0.0);
  out.samples.insert(out.samples.end(), egg.samples.begin(), egg.samples.end());
  out.samples.insert(out.samples.end(), pad, 0.0);
  const double shift = static_cast<double>(pad) / egg.rate;
  for (double& t : truth.gci) t += shift;
  for (double& t : truth.goi) t += shift;
  for (auto& [s, e] : truth.voiced) {
    s += shift;
    e += shift;
  }
  return {std::move(out), std::move(truth)};
}

}  // namespace

TEST_CASE("degg basics") {
  SUBCASE("constant signal differentiates to zero") {
    Waveform w;
    w.rate = 16000;
    w.samples.assign(100, 0.7);
    const Waveform d = degg(w);
    REQUIRE(d.samples.size() == 99);
    for (double v : d.samples) CHECK(v == 0.0);
  }
  SUBCASE("unit ramp differentiates to one") {
    Waveform w;
    w.rate = 16000;
    w.samples.resize(64);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = static_cast<double>(i) / w.rate;  // slope 1 per second
    const Waveform d = degg(w);
    for (double v : d.samples) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("sine derivative amplitude is 2 pi f A") {
    const double f = 50.0, a = 0.5, rate = 16000.0;
    Waveform w;
    w.rate = rate;
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = a * std::sin(2.0 * std::numbers::pi * f * i / rate);
    const Waveform d = degg(w);
    double peak = 0.0;
    for (double v : d.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(2.0 * std::numbers::pi * f * a).epsilon(0.02));
  }
  SUBCASE("too short input") {
    Waveform w;
    w.rate = 16000;
    w.samples = {1.0};
    CHECK_THROWS_AS(degg(w), DataError);
  }
}

TEST_CASE("epoch extraction closes the loop against the generator truth") {
  // worst-case corner: high pitch, extreme quotients
  for (const auto& [period, cq, sq] : std::vector<std::tuple<double, double, double>>{
           {1.0 / 300.0, 0.6, 2.0}, {1.0 / 300.0, 0.3, 0.7}, {1.0 / 80.0, 0.45, 1.0},
           {1.0 / 150.0, 0.53, 1.2}}) {
    const auto [egg, truth] = padded(synth_egg(repeat_cycle(period, cq, sq, 30), 16000));
    const EpochSet ep = extract_epochs(egg, full_mask(egg));

    REQUIRE(ep.gci.size() == truth.gci.size());
    for (std::size_t k = 0; k < ep.gci.size(); ++k)
      CHECK(std::abs(ep.gci[k] - truth.gci[k]) <= 0.00025);

    REQUIRE(ep.goi.size() == truth.goi.size());
    for (std::size_t k = 0; k < ep.goi.size(); ++k)
      CHECK(std::abs(ep.goi[k] - truth.goi[k]) <= 0.00025);
  }
}

TEST_CASE("closure holds for random cycle specs across the corpus ranges") {
  Rng rng(20206);
  for (int trial = 0; trial < 20; ++trial) {
    // base voice settings plus the corpus-level per-cycle jitter
    const double f0 = std::exp(rng.uniform(std::log(80.0), std::log(300.0)));
    const double cq_base = rng.uniform(0.32, 0.58);
    const double sq_base = rng.uniform(0.75, 1.9);
    std::vector<GlottalCycleSpec> specs;
    for (int k = 0; k < 25; ++k) {
      GlottalCycleSpec c;
      c.period = 1.0 / (f0 * (1.0 + rng.uniform(-0.02, 0.02)));
      c.cq = std::clamp(cq_base + rng.uniform(-0.015, 0.015), 0.3, 0.6);
      c.sq = std::clamp(sq_base + rng.uniform(-0.05, 0.05), 0.7, 2.0);
      c.amplitude = rng.uniform(0.85, 1.0);
      specs.push_back(c);
    }
    const auto [egg, truth] = padded(synth_egg(specs, 16000));
    const EpochSet ep = extract_epochs(egg, full_mask(egg));
    REQUIRE(ep.gci.size() == truth.gci.size());
    REQUIRE(ep.goi.size() == truth.goi.size());
    for (std::size_t k = 0; k < ep.gci.size(); ++k)
      CHECK(std::abs(ep.gci[k] - truth.gci[k]) <= 0.00025);
    for (std::size_t k = 0; k < ep.goi.size(); ++k)
      CHECK(std::abs(ep.goi[k] - truth.goi[k]) <= 0.00025);
  }
}

TEST_CASE("single perfect cycle gives exactly one GCI and one GOI, ordered") {
  const auto [egg, truth] = padded(synth_egg(repeat_cycle(0.010, 0.5, 1.0, 1), 16000));
  const EpochSet ep = extract_epochs(egg, full_mask(egg));
  REQUIRE(ep.gci.size() == 1);
  REQUIRE(ep.goi.size() == 1);
  CHECK(ep.gci[0] < ep.goi[0]);
}

TEST_CASE("fully unvoiced input yields an empty epoch set") {
  Waveform w;
  w.rate = 16000;
  w.samples.assign(4000, 0.0);
  const EpochSet ep = extract_epochs(w, VoicingMask{});
  CHECK(ep.gci.empty());
  CHECK(ep.goi.empty());
}

namespace {

EpochSet instants(std::vector<double> gci) {
  EpochSet e;
  e.gci = std::move(gci);
  return e;
}

}  // namespace

TEST_CASE("detection scoring") {
  std::vector<double> ref_times;
  for (int i = 0; i < 40; ++i) ref_times.push_back(0.1 + 0.008 * i);
  const EpochSet ref = instants(ref_times);

  SUBCASE("identity scores perfectly") {
    const DetectionScore s = score_detection(ref, ref, EpochKind::Gci);
    CHECK(s.idr == doctest::Approx(100.0));
    CHECK(s.mr == doctest::Approx(0.0));
    CHECK(s.far == doctest::Approx(0.0));
    CHECK(s.ida_ms == doctest::Approx(0.0));
  }

  SUBCASE("deleting every other instant halves the identification rate") {
    std::vector<double> half;
    for (std::size_t i = 0; i < ref_times.size(); i += 2) half.push_back(ref_times[i]);
    const DetectionScore s = score_detection(ref, instants(half), EpochKind::Gci);
    CHECK(s.idr == doctest::Approx(50.0));
    CHECK(s.mr == doctest::Approx(50.0));
    CHECK(s.far == doctest::Approx(0.0));
  }

  SUBCASE("IDA is the population std of the timing errors") {
    std::vector<double> shifted = ref_times;
    for (std::size_t i = 0; i < shifted.size(); i += 2) shifted[i] += 0.0003;
    const DetectionScore s = score_detection(ref, instants(shifted), EpochKind::Gci);
    CHECK(s.idr == doctest::Approx(100.0));
    // population std of {0.3, 0, 0.3, 0, ...} ms
    CHECK(s.ida_ms == doctest::Approx(0.15).epsilon(1e-9));
  }

  SUBCASE("IDR + MR + FAR is always 100") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> est;
      for (double t : ref_times) {
        if (rng.uniform() < 0.8) est.push_back(t + rng.normal(0.0, 0.001));
        if (rng.uniform() < 0.15) est.push_back(t + rng.uniform(-0.004, 0.004));
      }
      std::sort(est.begin(), est.end());
      const DetectionScore s = score_detection(ref, instants(est), EpochKind::Gci);
      CHECK(std::abs(s.idr + s.mr + s.far - 100.0) < 1e-6);
    }
  }

  SUBCASE("deleting an estimate never increases FAR") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> est;
      for (double t : ref_times) {
        est.push_back(t + rng.normal(0.0, 0.0005));
        if (rng.uniform() < 0.3) est.push_back(t + rng.uniform(-0.003, 0.003));
      }
      std::sort(est.begin(), est.end());
      const double far_before = score_detection(ref, instants(est), EpochKind::Gci).far;
      std::vector<double> smaller = est;
      smaller.erase(smaller.begin() + static_cast<long>(rng.index(smaller.size())));
      const double far_after = score_detection(ref, instants(smaller), EpochKind::Gci).far;
      CHECK(far_after <= far_before + 1e-9);
    }
  }

  SUBCASE("empty reference is an error") {
    CHECK_THROWS_AS(score_detection(EpochSet{}, ref, EpochKind::Gci), DataError);
  }
}

TEST_CASE("GOI scoring uses GCI-delimited cycles") {
  EpochSet ref;
  for (int i = 0; i < 20; ++i) {
    ref.gci.push_back(0.1 + 0.008 * i);
    ref.goi.push_back(0.1 + 0.008 * i + 0.0035);
  }
  const DetectionScore s = score_detection(ref, ref, EpochKind::Goi);
  CHECK(s.idr == doctest::Approx(100.0));
  CHECK(s.far == doctest::Approx(0.0));
  CHECK(s.ida_ms == doctest::Approx(0.0));
}

TEST_CASE("cycle metrics recover the generator quotients") {
  SUBCASE("symmetric cycle") {
    const auto [egg, truth] = padded(synth_egg(repeat_cycle(0.010, 0.5, 1.0, 20), 16000));
    const EpochSet ep = extract_epochs(egg, full_mask(egg));
    const CycleExtraction ext = cycle_metrics(ep, egg);
    REQUIRE(ext.cycles.size() >= 18);
    for (const auto& c : ext.cycles) {
      CHECK(std::abs(c.cq - 0.5) <= 0.02);
      CHECK(std::abs(c.oq - 0.5) <= 0.02);
      CHECK(std::abs(c.sq - 1.0) <= 0.05);
      CHECK(c.cq + c.oq == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("cq 0.53 is recovered within 0.02 per cycle") {
    const auto [egg, truth] = padded(synth_egg(repeat_cycle(0.008, 0.53, 1.14, 20), 16000));
    const EpochSet ep = extract_epochs(egg, full_mask(egg));
    const CycleExtraction ext = cycle_metrics(ep, egg);
    REQUIRE(!ext.cycles.empty());
    for (const auto& c : ext.cycles) CHECK(std::abs(c.cq - 0.53) <= 0.02);
  }
  SUBCASE("a cycle without a GOI is skipped and tallied") {
    EpochSet ep;
    ep.gci = {0.100, 0.108, 0.116};
    ep.goi = {0.104};  // second cycle has no GOI
    Waveform egg;
    egg.rate = 16000;
    egg.samples.assign(3200, 0.0);
    for (std::size_t i = 0; i < egg.samples.size(); ++i)
      egg.samples[i] = std::sin(2.0 * std::numbers::pi * 125.0 * i / 16000.0);
    const CycleExtraction ext = cycle_metrics(ep, egg);
    CHECK(ext.cycles.size() == 1);
    CHECK(ext.skipped == 1);
  }
}

TEST_CASE("HNR") {
  const auto [egg, truth] = padded(synth_egg(repeat_cycle(0.008, 0.5, 1.0, 60), 16000));
  // interior cycles only: the onset cycle has a genuinely different shape
  VoicingMask mask;
  mask.regions.emplace_back(truth.gci[1] - 0.001, truth.gci.back() + 0.008);

  SUBCASE("noise-free periodic signal hits the ceiling") {
    CHECK(hnr(egg, mask) == doctest::Approx(5.0).epsilon(1e-6));
  }

  SUBCASE("100:1 energy ratio gives HNR near 2") {
    double signal_energy = 0.0;
    for (double s : egg.samples) signal_energy += s * s;
    Waveform noisy = egg;
    Rng rng(8);
    std::vector<double> noise(egg.samples.size());
    double noise_energy = 0.0;
    for (double& n : noise) {
      n = rng.normal();
      noise_energy += n * n;
    }
    const double gain = std::sqrt(signal_energy / (100.0 * noise_energy));
    for (std::size_t i = 0; i < noise.size(); ++i) noisy.samples[i] += gain * noise[i];
    CHECK(hnr(noisy, mask) == doctest::Approx(2.0).epsilon(0.05));
  }

  SUBCASE("HNR decreases monotonically with added noise") {
    Rng rng(9);
    std::vector<double> noise(egg.samples.size());
    for (double& n : noise) n = rng.normal(0.0, 0.01);
    double prev = hnr(egg, mask);
    for (int level = 1; level <= 5; ++level) {
      Waveform noisy = egg;
      for (std::size_t i = 0; i < noise.size(); ++i)
        noisy.samples[i] += noise[i] * level * 4.0;
      const double h = hnr(noisy, mask);
      CHECK(h < prev + 1e-9);
      prev = h;
    }
  }

  SUBCASE("unvoiced-only input is an error") {
    Waveform w;
    w.rate = 16000;
    w.samples.assign(16000, 0.0);
    CHECK_THROWS_AS(hnr(w, VoicingMask{}), DataError);
  }
}

TEST_CASE("voicing detection") {
  SUBCASE("pure silence gives an empty mask") {
    Waveform w;
    w.rate = 16000;
    w.samples.assign(16000, 0.0);
    CHECK(detect_voicing(w).regions.empty());
  }

  SUBCASE("synthetic utterance boundaries within 25 ms per edge") {
    CorpusConfig cfg;
    cfg.count = 3;
    cfg.seed = 33;
    const auto dir = std::filesystem::temp_directory_path() / "aai_voicing";
    std::filesystem::remove_all(dir);
    const DatasetManifest m = synth_corpus(cfg, dir);
    for (const auto& e : m.entries) {
      const Waveform egg = read_wav(m.egg_file(e));
      const SynthUtteranceTruth truth = load_truth(dir / (e.id + "_truth.json"));
      const VoicingMask mask = detect_voicing(egg);
      REQUIRE(mask.regions.size() == truth.voiced.size());
      for (std::size_t r = 0; r < mask.regions.size(); ++r) {
        CHECK(std::abs(mask.regions[r].first - truth.voiced[r].first) < 0.025);
        CHECK(std::abs(mask.regions[r].second - truth.voiced[r].second) < 0.025);
      }
    }
  }

  SUBCASE("an all-voiced vowel is one region covering nearly everything") {
    const auto [egg, truth] = synth_egg(repeat_cycle(0.008, 0.5, 1.0, 120), 16000);
    const VoicingMask mask = detect_voicing(egg);
    REQUIRE(mask.regions.size() == 1);
    CHECK(mask.total_duration() >= 0.95 * egg.duration());
  }
}

TEST_CASE("compare_reports") {
  const auto [egg, truth] = padded(synth_egg(repeat_cycle(0.008, 0.5, 1.0, 30), 16000));
  const EpochSet ep = extract_epochs(egg, full_mask(egg));
  const CycleExtraction ext = cycle_metrics(ep, egg);
  REQUIRE(!ext.cycles.empty());

  SUBCASE("identical inputs give equal columns") {
    const MetricsReport r = compare_reports(ext.cycles, 2.5, ext.cycles, 2.5);
    CHECK(r.truth.cq == doctest::Approx(r.estimated.cq));
    CHECK(r.truth.oq == doctest::Approx(r.estimated.oq));
    CHECK(r.truth.sq == doctest::Approx(r.estimated.sq));
    CHECK(r.truth.hnr == doctest::Approx(r.estimated.hnr));
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(compare_reports({}, 0.0, ext.cycles, 0.0), DataError);
  }
}
