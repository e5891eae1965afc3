#include "aai/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "aai/errors.hpp"

namespace aai {

FrameDataset::FrameDataset(std::shared_ptr<const std::vector<UtterancePair>> utterances,
                           int window, int stride)
    : utterances_(std::move(utterances)), window_(window), stride_(stride) {
  if (window_ < 1) throw ConfigError("window length must be positive");
  if (stride_ < 1) throw ConfigError("stride must be >= 1");
  for (std::size_t u = 0; u < utterances_->size(); ++u) {
    const auto& pair = (*utterances_)[u];
    if (pair.speech.size() != pair.egg.size())
      throw DataError("unaligned utterance pair: " + pair.id);
    const std::size_t len = pair.speech.size();
    if (len < static_cast<std::size_t>(window_))
      throw DataError("utterance too short: " + pair.id);
    const std::size_t count = (len - window_) / stride_ + 1;
    frames_.reserve(frames_.size() + count);
    for (std::size_t f = 0; f < count; ++f)
      frames_.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(f * stride_)});
  }
}

FramePair FrameDataset::frame(std::size_t i) const {
  const Index idx = frames_.at(i);
  const auto& pair = (*utterances_)[idx.utterance];
  FramePair fp;
  fp.utterance_id = pair.id;
  fp.start = idx.start;
  fp.speech.assign(pair.speech.samples.begin() + idx.start,
                   pair.speech.samples.begin() + idx.start + window_);
  fp.egg.assign(pair.egg.samples.begin() + idx.start,
                pair.egg.samples.begin() + idx.start + window_);
  return fp;
}

void FrameDataset::gather(std::span<const std::size_t> ids, Matrix* speech, Matrix* egg) const {
  const std::size_t w = static_cast<std::size_t>(window_);
  if (speech) {
    speech->rows = ids.size();
    speech->cols = w;
    speech->data.resize(ids.size() * w);
  }
  if (egg) {
    egg->rows = ids.size();
    egg->cols = w;
    egg->data.resize(ids.size() * w);
  }
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const Index idx = frames_[ids[r]];
    const auto& pair = (*utterances_)[idx.utterance];
    if (speech)
      std::memcpy(speech->row(r), pair.speech.samples.data() + idx.start, w * sizeof(double));
    if (egg) std::memcpy(egg->row(r), pair.egg.samples.data() + idx.start, w * sizeof(double));
  }
}

double FrameDataset::egg_energy(std::size_t i) const {
  const Index idx = frames_[i];
  const auto& pair = (*utterances_)[idx.utterance];
  double acc = 0.0;
  for (int k = 0; k < window_; ++k) {
    const double v = pair.egg.samples[idx.start + k];
    acc += v * v;
  }
  return acc;
}

FrameDataset frame(const UtterancePair& pair, double window_ms, int stride) {
  return make_frames({pair}, window_ms, stride);
}

FrameDataset make_frames(std::vector<UtterancePair> utterances, double window_ms, int stride) {
  if (utterances.empty()) throw DataError("no utterances to frame");
  const double rate = utterances.front().speech.rate;
  const int window = static_cast<int>(std::lround(window_ms / 1000.0 * rate));
  auto shared = std::make_shared<const std::vector<UtterancePair>>(std::move(utterances));
  return FrameDataset(shared, window, stride);
}

Waveform add_noise(const Waveform& w, const NoiseSpec& spec, const Waveform* babble_source) {
  double p_signal = 0.0;
  for (double s : w.samples) p_signal += s * s;
  p_signal /= static_cast<double>(w.samples.size());
  if (w.samples.empty() || p_signal == 0.0) throw DataError("zero-energy signal");
  if (std::isinf(spec.snr_db) && spec.snr_db > 0) return w;  // no-noise sentinel
  if (!std::isfinite(spec.snr_db)) throw ConfigError("SNR must be finite");

  Rng rng(mix_seed(spec.seed, 0x6e6f697365ULL));
  std::vector<double> noise(w.samples.size());
  if (spec.kind == NoiseSpec::Kind::White) {
    for (double& n : noise) n = rng.normal();
  } else {
    if (babble_source == nullptr || babble_source->samples.empty())
      throw DataError("babble noise requested with no registered babble source");
    const auto& src = babble_source->samples;
    std::size_t offset = rng.index(src.size());
    for (std::size_t i = 0; i < noise.size(); ++i)
      noise[i] = src[(offset + i) % src.size()];
  }

  double p_noise = 0.0;
  for (double n : noise) p_noise += n * n;
  p_noise /= static_cast<double>(noise.size());
  if (p_noise == 0.0) throw DataError("noise source has zero energy");

  // Exact power calibration: measured SNR equals the request up to rounding.
  const double gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));

  Waveform out = w;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += gain * noise[i];
  return out;
}

std::vector<double> augment_input(std::span<const double> x, double noise_std,
                                  std::uint64_t seed) {
  if (noise_std < 0.0) throw ConfigError("noise std must be non-negative");
  std::vector<double> out(x.begin(), x.end());
  if (noise_std == 0.0) return out;
  Rng rng(mix_seed(seed, 0x657073ULL));
  for (double& v : out) v += rng.normal(0.0, noise_std);
  return out;
}

void augment_rows(Matrix& batch, double noise_std, Rng& rng) {
  if (noise_std < 0.0) throw ConfigError("noise std must be non-negative");
  if (noise_std == 0.0) return;
  for (double& v : batch.data) v += rng.normal(0.0, noise_std);
}

double slope_skewness(const Waveform& w) {
  if (w.samples.size() < 3) return 0.0;
  const std::size_t n = w.samples.size() - 1;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = w.samples[i + 1] - w.samples[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0;
  for (double v : d) {
    const double c = v - mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

double degg_peak_statistic(const Waveform& egg) {
  if (egg.samples.size() < 3) return 0.0;
  const std::size_t n = egg.samples.size() - 1;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = egg.samples[i + 1] - egg.samples[i];

  // Local extrema of the derivative, largest magnitudes first.
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const bool is_max = d[i] > d[i - 1] && d[i] >= d[i + 1];
    const bool is_min = d[i] < d[i - 1] && d[i] <= d[i + 1];
    if ((is_max || is_min) && d[i] != 0.0) peaks.push_back(d[i]);
  }
  if (peaks.empty()) return 0.0;
  std::sort(peaks.begin(), peaks.end(),
            [](double a, double b) { return std::abs(a) > std::abs(b); });
  const std::size_t top = std::max<std::size_t>(5, peaks.size() / 10);
  const std::size_t m = std::min(top, peaks.size());
  double signed_sum = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    signed_sum += peaks[i];
    abs_sum += std::abs(peaks[i]);
  }
  return abs_sum > 0.0 ? signed_sum / abs_sum : 0.0;
}

namespace {

void flip(Waveform& w) {
  for (double& s : w.samples) s = -s;
}

}  // namespace

PolarityResult normalize_polarity(const UtterancePair& pair, double dead_zone) {
  PolarityResult res;
  res.pair = pair;

  const double sk = slope_skewness(pair.speech);
  if (std::abs(sk) < dead_zone) {
    res.speech_ambiguous = true;
  } else if (sk > 0.0) {
    flip(res.pair.speech);
    res.speech_flipped = true;
  }

  const double pk = degg_peak_statistic(pair.egg);
  if (std::abs(pk) < dead_zone) {
    res.egg_ambiguous = true;
  } else if (pk > 0.0) {
    // Steepest dEGG events must be falls (closure instants).
    flip(res.pair.egg);
    res.egg_flipped = true;
  }
  return res;
}

}  // namespace aai
