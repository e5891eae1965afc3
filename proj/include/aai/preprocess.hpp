#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aai/kernels.hpp"
#include "aai/rng.hpp"
#include "aai/wave.hpp"

namespace aai {

// One aligned (speech window, EGG window) training pair.
struct FramePair {
  std::vector<double> speech;
  std::vector<double> egg;
  std::string utterance_id;
  std::size_t start = 0;  // start sample index in the utterance
};

// Aligned fixed-width windows over a set of utterance pairs. Frames are
// stored as (utterance, start) indices into shared waveforms; windows are
// materialized on demand, which keeps stride-1 framing cheap.
class FrameDataset {
 public:
  struct Index {
    std::uint32_t utterance;
    std::uint32_t start;
  };

  FrameDataset() = default;
  FrameDataset(std::shared_ptr<const std::vector<UtterancePair>> utterances, int window,
               int stride);

  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  int window() const { return window_; }
  int stride() const { return stride_; }

  FramePair frame(std::size_t i) const;
  const std::vector<Index>& frames() const { return frames_; }
  const std::vector<UtterancePair>& utterances() const { return *utterances_; }

  // Gather windows into batch matrices (one frame per row). Either output
  // may be null.
  void gather(std::span<const std::size_t> ids, Matrix* speech, Matrix* egg) const;

  // Squared L2 norm of the EGG window of frame i (used to filter
  // degenerate targets when training with a direction-based loss).
  double egg_energy(std::size_t i) const;

 private:
  std::shared_ptr<const std::vector<UtterancePair>> utterances_;
  std::vector<Index> frames_;
  int window_ = 0;
  int stride_ = 1;
};

// Frame one utterance pair into windows of round(window_ms/1000 * rate)
// samples. Frame count is floor((len - W) / stride) + 1.
FrameDataset frame(const UtterancePair& pair, double window_ms, int stride);

// Multi-utterance framing (frames ordered by (utterance, start index)).
FrameDataset make_frames(std::vector<UtterancePair> utterances, double window_ms, int stride);

struct NoiseSpec {
  enum class Kind { White, Babble };
  Kind kind = Kind::White;
  double snr_db = 20.0;  // +inf means no noise
  std::uint64_t seed = 0;
};

// Additive noise at an exactly calibrated SNR: the noise is scaled so that
// 10*log10(P_signal / P_noise) equals spec.snr_db. Babble requires a
// registered source waveform (looped from a seed-determined offset).
Waveform add_noise(const Waveform& w, const NoiseSpec& spec,
                   const Waveform* babble_source = nullptr);

// x + eps with eps i.i.d. zero-mean Gaussian of standard deviation
// noise_std; the posterior-widening noise of the training loop.
std::vector<double> augment_input(std::span<const double> x, double noise_std,
                                  std::uint64_t seed);

// In-place batch variant drawing from an existing stream (rows augmented in
// order, so the result does not depend on thread count).
void augment_rows(Matrix& batch, double noise_std, Rng& rng);

struct PolarityResult {
  UtterancePair pair;
  bool speech_flipped = false;
  bool egg_flipped = false;
  bool speech_ambiguous = false;
  bool egg_ambiguous = false;
};

// Canonical polarity: speech slope-skewness non-positive; the largest
// dEGG peaks negative (closure = steep fall). Detector statistics within
// the dead zone leave the channel unchanged and set the ambiguous flag.
PolarityResult normalize_polarity(const UtterancePair& pair, double dead_zone = 0.05);

// Detector statistics, exposed for tests.
double slope_skewness(const Waveform& w);
double degg_peak_statistic(const Waveform& egg);

}  // namespace aai
