#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace aai {

enum class ChannelRole { Speech, Egg };

// A sampled 1-D signal. Amplitudes are dimensionless, nominally in [-1, 1]
// after ingestion normalization.
struct Waveform {
  std::vector<double> samples;
  double rate = 0.0;  // Hz
  ChannelRole role = ChannelRole::Speech;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / rate; }
};

// Simultaneously recorded speech/EGG channels, rate- and length-aligned.
struct UtterancePair {
  Waveform speech;
  Waveform egg;
  std::string id;
};

struct ManifestEntry {
  std::string id;
  std::string speech_path;  // relative to manifest directory
  std::string egg_path;
  std::string split;  // train | val | test
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  double rate = 0.0;
  std::filesystem::path dir;  // directory the paths are relative to

  std::filesystem::path speech_file(const ManifestEntry& e) const { return dir / e.speech_path; }
  std::filesystem::path egg_file(const ManifestEntry& e) const { return dir / e.egg_path; }
};

enum class WavEncoding { Pcm8, Pcm16, Pcm24, Pcm32, Float32 };

// RIFF/WAVE reader for linear PCM (8/16/24/32-bit int) and 32-bit float.
// `channel` selects one channel of a multi-channel file.
Waveform read_wav(const std::filesystem::path& path, int channel = 0);

void write_wav(const Waveform& w, const std::filesystem::path& path,
               WavEncoding enc = WavEncoding::Float32);

// Windowed-sinc resampler with cutoff at the lower of the two Nyquist
// frequencies. Output length is floor(n * target / source).
Waveform resample(const Waveform& w, double target_rate);

// Scales so that max |amplitude| == 1. Throws DataError on zero-energy input.
void peak_normalize(Waveform& w);

// Load, resample to target_rate, peak-normalize each channel independently,
// trim both channels to the shorter length.
UtterancePair load_pair(const std::filesystem::path& speech_path,
                        const std::filesystem::path& egg_path, double target_rate,
                        const std::string& id = "", int channel = 0);

// CSV manifest: header `id,speech_path,egg_path,split`, paths relative to the
// manifest's directory. Duplicate ids and missing files are rejected.
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace aai
