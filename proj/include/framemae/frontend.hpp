#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "framemae/audio.hpp"
#include "framemae/errors.hpp"

namespace framemae {

using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

enum class FeatureKind { mel, embedding, decoder_input };

struct FeatureSequence {
  Mat data;  // T x F
  double frame_rate = 75.0;
  FeatureKind kind = FeatureKind::mel;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

namespace fft_detail {

// One cached FFTW r2c plan per transform size. Plan creation is not
// thread-safe; execution with fftw_execute_dft_r2c on private buffers is.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<size_t>(n));
    out_ = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void run(const double* src, std::complex<double>* dst) {
    std::copy(src, src + n_, in_);
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) dst[k] = {out_[k][0], out_[k][1]};
  }

 private:
  static std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
  }
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

inline double reflect_sample(const std::vector<double>& x, long i) {
  const long n = static_cast<long>(x.size());
  if (n == 1) return x[0];
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<size_t>(i)];
}

}  // namespace fft_detail

// Hann-windowed DFT frames, reflect-centered so frame t covers samples around
// t*hop. Frame count is floor(T_a / hop).
inline CMat stft(const AudioBuffer& a, int win, int hop) {
  if (win <= 0 || hop <= 0) throw ConfigError("stft window and hop must be positive");
  if (win % 2 != 0) throw ConfigError("stft window must be even");
  if (hop > win) throw ConfigError("stft hop must not exceed window");
  if (a.samples.empty()) throw FormatError("stft on empty audio");
  const Eigen::Index frames = static_cast<Eigen::Index>(a.samples.size()) / hop;
  const int bins = win / 2 + 1;
  std::vector<double> window(static_cast<size_t>(win));
  for (int n = 0; n < win; ++n)
    window[static_cast<size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);

  CMat out(frames, bins);
  fft_detail::RealFft fft(win);
  std::vector<double> frame(static_cast<size_t>(win));
  std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
  for (Eigen::Index t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * hop;
    for (int n = 0; n < win; ++n)
      frame[static_cast<size_t>(n)] =
          fft_detail::reflect_sample(a.samples, center + n - win / 2) *
          window[static_cast<size_t>(n)];
    fft.run(frame.data(), spec.data());
    for (int k = 0; k < bins; ++k) out(t, k) = spec[static_cast<size_t>(k)];
  }
  return out;
}

// Triangular area-normalized mel filterbank spanning 0 Hz .. Nyquist.
// Returns bins x n_mels so that power * fb gives mel energies.
inline Mat mel_filterbank(int n_mels, int win, int sample_rate) {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  const int bins = win / 2 + 1;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
  Mat fb = Mat::Zero(bins, n_mels);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double mid = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    const double norm = 2.0 / (hi - lo);  // unit area in Hz
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / win;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb(k, m) = w * norm;
    }
  }
  return fb;
}

constexpr double kLogMelEpsilon = 1e-5;

struct FrontendConfig {
  int win = 640;
  int hop = 320;
  int n_mels = 128;
};

// Log mel energies at sample_rate/hop frames per second (75 at 24 kHz / 320).
inline FeatureSequence melspectrogram(const AudioBuffer& a, const FrontendConfig& cfg,
                                      const Mat* shared_fb = nullptr) {
  const CMat spec = stft(a, cfg.win, cfg.hop);
  const Mat power = spec.cwiseAbs2();
  Mat fb_local;
  if (shared_fb == nullptr) {
    fb_local = mel_filterbank(cfg.n_mels, cfg.win, a.sample_rate);
    shared_fb = &fb_local;
  }
  FeatureSequence out;
  out.kind = FeatureKind::mel;
  out.frame_rate = static_cast<double>(a.sample_rate) / cfg.hop;
  out.data = ((power * (*shared_fb)).array() + kLogMelEpsilon).log().matrix();
  if (!out.data.allFinite()) throw NumericError("non-finite mel feature");
  return out;
}

}  // namespace framemae
