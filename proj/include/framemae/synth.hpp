#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "framemae/audio.hpp"
#include "framemae/errors.hpp"
#include "framemae/rng.hpp"

namespace framemae {

struct SynthSpec {
  std::string generator = "pitch";  // pitch | am_noise | tone_noise
  int classes = 8;
  int items = 100;
  double seconds = 4.0;
  int sample_rate = 24000;
  double base_freq = 220.0;   // pitch / tone_noise: class c gets base_freq * ratio^c
  double freq_ratio = std::pow(2.0, 1.0 / 3.0);
  double base_mod_rate = 1.0;  // am_noise: modulation rate series, same geometric form
  double mod_ratio = 1.6;
  double noise_level = 0.0;    // additive white noise amplitude for pitch/tone_noise
};

struct LabeledAudio {
  AudioBuffer audio;
  int label = 0;
};

namespace synth_detail {

inline AudioBuffer tone(double freq, const SynthSpec& spec, Rng& rng, double noise_level) {
  AudioBuffer a;
  a.sample_rate = spec.sample_rate;
  const size_t n = static_cast<size_t>(std::llround(spec.seconds * spec.sample_rate));
  a.samples.resize(n);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = 0.4 * (1.0 + 0.25 * (rng.uniform() - 0.5));
  for (size_t t = 0; t < n; ++t) {
    double s = amp * std::sin(2.0 * std::numbers::pi * freq * t / spec.sample_rate + phase);
    if (noise_level > 0) s += noise_level * rng.normal();
    a.samples[t] = std::clamp(s, -1.0, 1.0);
  }
  return a;
}

inline AudioBuffer am_noise(double mod_rate, const SynthSpec& spec, Rng& rng) {
  AudioBuffer a;
  a.sample_rate = spec.sample_rate;
  const size_t n = static_cast<size_t>(std::llround(spec.seconds * spec.sample_rate));
  a.samples.resize(n);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (size_t t = 0; t < n; ++t) {
    const double env =
        0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * mod_rate * t / spec.sample_rate + phase));
    a.samples[t] = std::clamp(0.3 * env * rng.normal(), -1.0, 1.0);
  }
  return a;
}

}  // namespace synth_detail

// Deterministic labeled corpus; class c of "pitch"/"tone_noise" is a pure tone
// at base_freq * freq_ratio^c, "am_noise" modulates white noise at a
// class-indexed geometric series of rates.
inline std::vector<LabeledAudio> synth_dataset(const SynthSpec& spec, Rng& rng) {
  if (spec.generator != "pitch" && spec.generator != "am_noise" &&
      spec.generator != "tone_noise")
    throw ConfigError("unknown synthetic generator: " + spec.generator);
  if (spec.classes < 1) throw ConfigError("synth classes must be >= 1");
  if (spec.items < 0) throw ConfigError("synth items must be >= 0");
  std::vector<LabeledAudio> out;
  out.reserve(static_cast<size_t>(spec.items));
  for (int i = 0; i < spec.items; ++i) {
    const int label = i % spec.classes;
    Rng item_rng = rng.fork();
    LabeledAudio item;
    item.label = label;
    if (spec.generator == "pitch") {
      const double f = spec.base_freq * std::pow(spec.freq_ratio, label);
      item.audio = synth_detail::tone(f, spec, item_rng, spec.noise_level);
    } else if (spec.generator == "tone_noise") {
      const double f = spec.base_freq * std::pow(spec.freq_ratio, label);
      const double noise = spec.noise_level > 0 ? spec.noise_level : 0.1;
      item.audio = synth_detail::tone(f, spec, item_rng, noise);
    } else {
      const double rate = spec.base_mod_rate * std::pow(spec.mod_ratio, label);
      item.audio = synth_detail::am_noise(rate, spec, item_rng);
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace framemae
