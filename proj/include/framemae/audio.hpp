#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "framemae/errors.hpp"
#include "framemae/rng.hpp"

namespace framemae {

struct AudioBuffer {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 24000;

  size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

namespace wav_detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline float read_f32(const unsigned char* p) {
  uint32_t u = read_u32(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace wav_detail

// PCM16 / float32 RIFF reader. Multi-channel input is averaged to mono.
inline AudioBuffer load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t p = 12;
  while (p + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + p);
    const uint32_t len = read_u32(bytes.data() + p + 4);
    const size_t body = p + 8;
    if (body + len > bytes.size()) throw FormatError("truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("short fmt chunk in " + path);
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    p = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0) throw FormatError("missing fmt/data chunk in " + path);
  if (channels < 1 || sample_rate == 0) throw FormatError("bad fmt fields in " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw UnsupportedError("unsupported wav encoding (format=" + std::to_string(format) +
                           ", bits=" + std::to_string(bits) + ") in " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t frames = data_len / frame_bytes;
  AudioBuffer out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.samples.resize(frames);
  for (size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const unsigned char* sp = bytes.data() + data_off + t * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        const int16_t v = static_cast<int16_t>(read_u16(sp));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        acc += static_cast<double>(read_f32(sp));
      }
    }
    out.samples[t] = std::clamp(acc / channels, -1.0, 1.0);
  }
  return out;
}

inline void save_wav_pcm16(const std::string& path, const AudioBuffer& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  const uint32_t data_len = static_cast<uint32_t>(a.samples.size() * 2);
  auto w32 = [&](uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                 static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  auto w16 = [&](uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  out.write("RIFF", 4);
  w32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  w32(16);
  w16(1);  // PCM
  w16(1);  // mono
  w32(static_cast<uint32_t>(a.sample_rate));
  w32(static_cast<uint32_t>(a.sample_rate) * 2);
  w16(2);
  w16(16);
  out.write("data", 4);
  w32(data_len);
  for (double s : a.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    int v = static_cast<int>(std::lround(clamped * 32767.0));
    w16(static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!out) throw FormatError("short write: " + path);
}

// Windowed-sinc sample-rate conversion (Hann window, 16 zero crossings).
inline AudioBuffer resample(const AudioBuffer& a, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (a.sample_rate == target_rate) return a;
  const double ratio = static_cast<double>(target_rate) / a.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;  // fraction of source Nyquist
  const int zero_crossings = 16;
  const double half_width = zero_crossings / cutoff;
  const size_t out_len =
      static_cast<size_t>(std::llround(static_cast<double>(a.samples.size()) * ratio));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min<long>(static_cast<long>(a.samples.size()) - 1,
                                   static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long n = lo; n <= hi; ++n) {
      const double x = (n - center) * cutoff;
      double sinc = (std::abs(x) < 1e-12) ? 1.0
                                          : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double win_arg = (n - center) / half_width;
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * win_arg);
      acc += a.samples[static_cast<size_t>(n)] * sinc * win * cutoff;
    }
    out.samples[i] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

// Fixed-length training crop: uniform random offset, zero-padded on the right
// when the input is shorter than the requested duration.
inline AudioBuffer random_crop(const AudioBuffer& a, double duration_s, Rng& rng) {
  if (duration_s <= 0) throw ConfigError("crop duration must be positive");
  const size_t want = static_cast<size_t>(std::llround(duration_s * a.sample_rate));
  AudioBuffer out;
  out.sample_rate = a.sample_rate;
  out.samples.assign(want, 0.0);
  if (a.samples.size() <= want) {
    std::copy(a.samples.begin(), a.samples.end(), out.samples.begin());
  } else {
    const size_t max_offset = a.samples.size() - want;
    const size_t offset = static_cast<size_t>(rng.uniform_int(max_offset + 1));
    std::copy(a.samples.begin() + offset, a.samples.begin() + offset + want,
              out.samples.begin());
  }
  return out;
}

// Non-overlapping consecutive chunks; the final partial chunk is zero-padded
// to full length.
inline std::vector<AudioBuffer> chunk_for_inference(const AudioBuffer& a, double duration_s) {
  if (duration_s <= 0) throw ConfigError("chunk duration must be positive");
  if (a.samples.empty()) throw FormatError("cannot chunk empty audio");
  const size_t chunk = static_cast<size_t>(std::llround(duration_s * a.sample_rate));
  std::vector<AudioBuffer> out;
  for (size_t start = 0; start < a.samples.size(); start += chunk) {
    AudioBuffer b;
    b.sample_rate = a.sample_rate;
    b.samples.assign(chunk, 0.0);
    const size_t n = std::min(chunk, a.samples.size() - start);
    std::copy(a.samples.begin() + start, a.samples.begin() + start + n, b.samples.begin());
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace framemae
