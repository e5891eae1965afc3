#include "aai/wave.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "aai/errors.hpp"

namespace aai {

namespace {

struct FmtChunk {
  std::uint16_t audio_format = 0;  // 1 = PCM, 3 = IEEE float
  std::uint16_t num_channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint32_t byte_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits_per_sample = 0;
};

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

double decode_sample(const unsigned char* p, const FmtChunk& fmt) {
  switch (fmt.bits_per_sample) {
    case 8:
      // 8-bit WAV is unsigned with a 128 offset
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: {
      std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return v / 32768.0;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xffffff;  // sign extend
      return v / 8388608.0;
    }
    case 32: {
      std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                        (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      if (fmt.audio_format == 3) {
        float f;
        std::memcpy(&f, &u, 4);
        return static_cast<double>(f);
      }
      return static_cast<std::int32_t>(u) / 2147483648.0;
    }
    default:
      throw DataError("unsupported WAV bit depth: " + std::to_string(fmt.bits_per_sample));
  }
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path, int channel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw DataError("not a RIFF file: " + path.string());
  read_le<std::uint32_t>(in);
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw DataError("not a WAVE file: " + path.string());

  FmtChunk fmt;
  bool have_fmt = false;
  std::vector<unsigned char> raw;

  while (in) {
    in.read(tag, 4);
    if (!in) break;
    const std::uint32_t size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt.audio_format = read_le<std::uint16_t>(in);
      fmt.num_channels = read_le<std::uint16_t>(in);
      fmt.sample_rate = read_le<std::uint32_t>(in);
      fmt.byte_rate = read_le<std::uint32_t>(in);
      fmt.block_align = read_le<std::uint16_t>(in);
      fmt.bits_per_sample = read_le<std::uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt chunk: " + path.string());
      raw.resize(size);
      in.read(reinterpret_cast<char*>(raw.data()), size);
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
    }
  }
  if (!have_fmt || raw.empty()) throw DataError("no audio data in " + path.string());
  if (fmt.audio_format != 1 && fmt.audio_format != 3)
    throw DataError("unsupported WAV encoding (only PCM / IEEE float): " + path.string());
  if (fmt.audio_format == 3 && fmt.bits_per_sample != 32)
    throw DataError("unsupported float WAV bit depth: " + path.string());
  if (channel < 0 || channel >= fmt.num_channels)
    throw DataError("channel index out of range in " + path.string());
  if (fmt.sample_rate == 0) throw DataError("non-positive sample rate in " + path.string());

  const std::size_t bytes_per = fmt.bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per * fmt.num_channels;
  const std::size_t frames = raw.size() / frame_bytes;
  if (frames == 0) throw DataError("zero-length signal: " + path.string());

  Waveform w;
  w.rate = static_cast<double>(fmt.sample_rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i)
    w.samples[i] = decode_sample(raw.data() + i * frame_bytes + channel * bytes_per, fmt);
  return w;
}

void write_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding enc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());

  int bits = 0;
  std::uint16_t format = 1;
  switch (enc) {
    case WavEncoding::Pcm8: bits = 8; break;
    case WavEncoding::Pcm16: bits = 16; break;
    case WavEncoding::Pcm24: bits = 24; break;
    case WavEncoding::Pcm32: bits = 32; break;
    case WavEncoding::Float32: bits = 32; format = 3; break;
  }
  const std::uint32_t bytes_per = bits / 8;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size() * bytes_per);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(w.rate));

  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format);
  write_le<std::uint16_t>(out, 1);  // mono
  write_le<std::uint32_t>(out, rate);
  write_le<std::uint32_t>(out, rate * bytes_per);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(bytes_per));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(bits));
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_size);

  for (double s : w.samples) {
    switch (enc) {
      case WavEncoding::Pcm8: {
        long q = std::lround(s * 128.0) + 128;
        write_le<std::uint8_t>(out, static_cast<std::uint8_t>(std::clamp(q, 0L, 255L)));
        break;
      }
      case WavEncoding::Pcm16: {
        long q = std::lround(s * 32768.0);
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(
                                         static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
        break;
      }
      case WavEncoding::Pcm24: {
        long q = std::clamp(std::lround(s * 8388608.0), -8388608L, 8388607L);
        std::uint32_t u = static_cast<std::uint32_t>(q) & 0xffffff;
        unsigned char buf[3] = {static_cast<unsigned char>(u & 0xff),
                                static_cast<unsigned char>((u >> 8) & 0xff),
                                static_cast<unsigned char>((u >> 16) & 0xff)};
        out.write(reinterpret_cast<const char*>(buf), 3);
        break;
      }
      case WavEncoding::Pcm32: {
        double scaled = s * 2147483648.0;
        scaled = std::clamp(scaled, -2147483648.0, 2147483647.0);
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(std::llround(scaled))));
        break;
      }
      case WavEncoding::Float32: {
        float f = static_cast<float>(s);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        write_le<std::uint32_t>(out, u);
        break;
      }
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Waveform resample(const Waveform& w, double target_rate) {
  if (w.rate <= 0.0 || target_rate <= 0.0) throw DataError("non-positive sample rate");
  if (w.samples.empty()) throw DataError("zero-length signal");
  if (w.rate == target_rate) return w;

  const double ratio = target_rate / w.rate;
  const std::size_t out_len =
      static_cast<std::size_t>(std::floor(static_cast<double>(w.samples.size()) * ratio));
  if (out_len == 0) throw DataError("signal too short to resample");

  // Cutoff at the lower Nyquist, pulled in slightly to tame aliasing.
  const double fc = 0.95 * std::min(1.0, ratio);
  const int zero_crossings = 24;
  const double half_width = zero_crossings / fc;

  Waveform out;
  out.rate = target_rate;
  out.role = w.role;
  out.samples.resize(out_len);

  const auto& x = w.samples;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());

#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const std::ptrdiff_t k0 = static_cast<std::ptrdiff_t>(std::ceil(center - half_width));
    const std::ptrdiff_t k1 = static_cast<std::ptrdiff_t>(std::floor(center + half_width));
    double acc = 0.0, wsum = 0.0;
    for (std::ptrdiff_t k = k0; k <= k1; ++k) {
      const double t = static_cast<double>(k) - center;
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * t / half_width);
      double s;
      if (t == 0.0) {
        s = fc;
      } else {
        const double a = std::numbers::pi * fc * t;
        s = fc * std::sin(a) / a;
      }
      const double h = s * window;
      wsum += h;
      if (k >= 0 && k < n) acc += h * x[static_cast<std::size_t>(k)];
    }
    // Normalizing by the kernel sum preserves DC exactly.
    out.samples[i] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

void peak_normalize(Waveform& w) {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) throw DataError("zero-energy signal");
  if (peak == 1.0) return;
  const double inv = 1.0 / peak;
  for (double& s : w.samples) s *= inv;
}

UtterancePair load_pair(const std::filesystem::path& speech_path,
                        const std::filesystem::path& egg_path, double target_rate,
                        const std::string& id, int channel) {
  if (target_rate <= 0.0) throw DataError("non-positive target rate");
  UtterancePair pair;
  pair.id = id.empty() ? speech_path.stem().string() : id;
  pair.speech = resample(read_wav(speech_path, channel), target_rate);
  pair.egg = resample(read_wav(egg_path, channel), target_rate);
  pair.speech.role = ChannelRole::Speech;
  pair.egg.role = ChannelRole::Egg;

  // Simultaneous recordings differ only by trailing samples.
  const std::size_t len = std::min(pair.speech.size(), pair.egg.size());
  if (len == 0) throw DataError("zero-length signal after resampling");
  pair.speech.samples.resize(len);
  pair.egg.samples.resize(len);

  peak_normalize(pair.speech);
  peak_normalize(pair.egg);
  return pair;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());

  DatasetManifest m;
  m.dir = path.parent_path();

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + path.string());
  auto header = split_csv_row(line);
  if (header.size() != 4 || header[0] != "id" || header[1] != "speech_path" ||
      header[2] != "egg_path" || header[3] != "split")
    throw DataError("bad manifest header (expected id,speech_path,egg_path,split): " + path.string());

  std::set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto f = split_csv_row(line);
    if (f.size() != 4)
      throw DataError("manifest parse error at row " + std::to_string(row) + ": " + path.string());
    ManifestEntry e{f[0], f[1], f[2], f[3]};
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw DataError("unknown split '" + e.split + "' at row " + std::to_string(row));
    if (!seen.insert(e.id).second) throw DataError("duplicate id '" + e.id + "' in manifest");
    if (!std::filesystem::exists(m.speech_file(e)))
      throw DataError("missing file: " + m.speech_file(e).string());
    if (!std::filesystem::exists(m.egg_file(e)))
      throw DataError("missing file: " + m.egg_file(e).string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << "id,speech_path,egg_path,split\n";
  for (const auto& e : m.entries)
    out << e.id << ',' << e.speech_path << ',' << e.egg_path << ',' << e.split << '\n';
  if (!out) throw DataError("manifest write failed: " + path.string());
}

}  // namespace aai
