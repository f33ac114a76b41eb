#ifndef WHISPERLINE_TESTS_TESTUTIL_HPP
#define WHISPERLINE_TESTS_TESTUTIL_HPP

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "whisperline/audio_io.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("whisperline_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline whisperline::AudioClip make_tone(double freq_hz, int rate, std::size_t n,
                                        double amplitude = 0.5) {
  whisperline::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    clip.samples[i] =
        amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate);
  return clip;
}

inline whisperline::AudioClip make_noise_clip(int rate, std::size_t n, std::uint32_t seed,
                                              double amplitude = 0.3) {
  whisperline::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(n);
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (auto& s : clip.samples) s = dist(gen);
  return clip;
}

// O(n^2) DFT magnitude oracle, independent of the radix-2 implementation.
inline std::vector<double> direct_dft_magnitudes(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mags(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      re += x[i] * std::cos(ang);
      im += x[i] * std::sin(ang);
    }
    mags[k] = std::hypot(re, im);
  }
  return mags;
}

// Direct-sum orthonormal DCT-II oracle.
inline std::vector<double> direct_dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::cos(M_PI * (2.0 * i + 1.0) * j / (2.0 * n));
    out[j] = (j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n)) * acc;
  }
  return out;
}

// Largest-magnitude bin of a 1024-point rectangular-window spectrum taken
// from the middle of the clip.
inline int dominant_bin_1024(const whisperline::AudioClip& clip) {
  const std::size_t n = 1024;
  const std::size_t start = clip.samples.size() > n ? (clip.samples.size() - n) / 2 : 0;
  std::vector<double> frame(n);
  for (std::size_t i = 0; i < n; ++i) frame[i] = clip.samples[start + i];
  const auto mags = direct_dft_magnitudes(frame);
  int best = 0;
  for (std::size_t k = 1; k < mags.size(); ++k)
    if (mags[k] > mags[best]) best = static_cast<int>(k);
  return best;
}

// Peak magnitude near a frequency (+-2 bins) of a mid-clip 1024-point frame.
inline double magnitude_near_hz(const whisperline::AudioClip& clip, double freq_hz) {
  const std::size_t n = 1024;
  const std::size_t start = clip.samples.size() > n ? (clip.samples.size() - n) / 2 : 0;
  std::vector<double> frame(n);
  for (std::size_t i = 0; i < n; ++i) frame[i] = clip.samples[start + i];
  const auto mags = direct_dft_magnitudes(frame);
  const int center = static_cast<int>(std::lround(freq_hz * n / clip.sample_rate));
  double best = 0.0;
  for (int k = std::max(0, center - 2); k <= std::min<int>(n / 2, center + 2); ++k)
    best = std::max(best, mags[k]);
  return best;
}

// Normalized autocorrelation pitch detector: returns true when a clear
// periodic peak exists in the requested lag range.
inline bool frame_is_voiced(const double* x, std::size_t n, int rate, double f0_min, double f0_max,
                            double threshold = 0.35) {
  double energy = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) energy += (x[i] - mean) * (x[i] - mean);
  if (energy <= 1e-12) return false;

  const int lag_min = static_cast<int>(rate / f0_max);
  const int lag_max = std::min<int>(static_cast<int>(rate / f0_min), static_cast<int>(n) - 1);
  double best = 0.0;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
    best = std::max(best, acc / energy);
  }
  return best > threshold;
}

// Geometric over arithmetic mean of the magnitude spectrum over a bin range.
inline double spectral_flatness(const std::vector<double>& mags, std::size_t first = 1,
                                std::size_t last = 0) {
  if (last == 0 || last >= mags.size()) last = mags.size() - 1;
  double log_sum = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = first; k <= last; ++k) {
    const double v = mags[k] + 1e-12;
    log_sum += std::log(v);
    sum += v;
    ++n;
  }
  return std::exp(log_sum / n) / (sum / n);
}


inline std::vector<double> mid_frame(const whisperline::AudioClip& clip, std::size_t n = 1024) {
  const std::size_t start = clip.samples.size() > n ? (clip.samples.size() - n) / 2 : 0;
  std::vector<double> frame(n);
  for (std::size_t i = 0; i < n; ++i) frame[i] = clip.samples[start + i];
  return frame;
}
inline std::vector<double> hann_frame(const whisperline::AudioClip& clip, std::size_t n = 1024) {
  std::vector<double> frame = mid_frame(clip, n);
  for (std::size_t i = 0; i < n; ++i)
    frame[i] *= 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n));
  return frame;
}


// Median spacing (in bins) between adjacent harmonic peaks of a magnitude
// spectrum restricted to [first, last].
inline double peak_spacing_bins(const std::vector<double>& mags, int first, int last) {
  std::vector<int> peaks;
  for (int k = std::max(first, 1); k <= last - 1; ++k) {
    if (mags[k] > mags[k - 1] && mags[k] >= mags[k + 1]) {
      double local_mean = 0.0;
      int cnt = 0;
      for (int j = std::max(first, k - 8); j <= std::min(last, k + 8); ++j, ++cnt)
        local_mean += mags[j];
      local_mean /= cnt;
      if (mags[k] > 1.5 * local_mean) peaks.push_back(k);
    }
  }
  if (peaks.size() < 3) return 0.0;
  std::vector<double> gaps;
  for (std::size_t i = 1; i < peaks.size(); ++i) gaps.push_back(peaks[i] - peaks[i - 1]);
  std::sort(gaps.begin(), gaps.end());
  return gaps[gaps.size() / 2];
}

// Relative error used by the finite-difference gradient checks.
inline double rel_err(double a, double b) {
  const double scale = std::abs(a) + std::abs(b);
  return scale > 1e-10 ? std::abs(a - b) / scale : std::abs(a - b);
}

}  // namespace testutil

#endif  // WHISPERLINE_TESTS_TESTUTIL_HPP
