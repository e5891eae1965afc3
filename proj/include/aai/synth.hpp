#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "aai/wave.hpp"

namespace aai {

// Generator controls for one glottal cycle.
struct GlottalCycleSpec {
  double period;     // seconds
  double cq;         // contact quotient, in (0, 1)
  double sq;         // speed quotient (opening/closing ratio), > 0
  double amplitude;  // > 0
};

// Exactly known ground truth for a synthesized utterance. Every cycle k
// starts at gci[k]; goi[k] = gci[k] + cq_k * period_k. The final cycle of a
// voiced region ends in a slow contact taper instead of a new closure, so
// gci, goi and cycles all have one entry per cycle.
struct SynthUtteranceTruth {
  struct Cycle {
    double cq, oq, sq;
  };
  std::vector<double> gci;  // seconds, strictly increasing
  std::vector<double> goi;
  std::vector<std::pair<double, double>> voiced;  // (start, end) seconds
  std::vector<Cycle> cycles;
};

// Piecewise-smooth EGG for one voiced region of consecutive cycles: the
// steepest fall of each cycle is exactly at its GCI, the steepest rise at
// its GOI, and the open-phase extremum divides the open phase in ratio sq.
std::pair<Waveform, SynthUtteranceTruth> synth_egg(const std::vector<GlottalCycleSpec>& cycles,
                                                   double rate);

struct Formant {
  double center_hz;
  double bandwidth_hz;
};

// Source-filter synthesis: differentiated-EGG excitation through a cascade
// of two-pole resonators, with aspiration noise in the unvoiced spans.
Waveform synth_speech_from_egg(const Waveform& egg, const std::vector<Formant>& formants,
                               std::uint64_t seed);

struct CorpusConfig {
  int count = 50;
  std::uint64_t seed = 1;
  double rate = 16000.0;
  double f0_min = 80.0, f0_max = 300.0;
  double cq_min = 0.3, cq_max = 0.6;
  double sq_min = 0.7, sq_max = 2.0;
  int regions_min = 2, regions_max = 3;         // voiced regions per utterance
  double region_s_min = 0.25, region_s_max = 0.5;
  double gap_s_min = 0.08, gap_s_max = 0.15;    // unvoiced gaps
  double train_frac = 0.70, val_frac = 0.15;    // remainder is test
};

// Writes {id}_speech.wav, {id}_egg.wav, {id}_truth.json per utterance plus
// manifest.csv; bit-identical across runs for a fixed seed.
DatasetManifest synth_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

void save_truth(const SynthUtteranceTruth& truth, const std::filesystem::path& path);
SynthUtteranceTruth load_truth(const std::filesystem::path& path);

}  // namespace aai
