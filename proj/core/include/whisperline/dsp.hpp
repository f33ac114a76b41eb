#ifndef WHISPERLINE_DSP_HPP
#define WHISPERLINE_DSP_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "whisperline/audio_io.hpp"

namespace whisperline {

enum class Window { Hann, Hamming, Rect };

std::string to_string(Window w);
Window window_from_string(const std::string& s);

// Short-time analysis parameters. fft_size equals frame_size; with the 2K
// convention K = frame_size / 2 and the spectrogram keeps bins 0..K.
struct FramingConfig {
  int frame_size = 1024;
  int hop = 128;  // one eighth of the frame size
  Window window = Window::Hann;

  int fft_size() const { return frame_size; }
  int half_bins() const { return frame_size / 2; }  // K
};

// Magnitude short-time spectrum S(n, k): n_frames x (K+1), row-major.
struct Spectrogram {
  std::vector<double> values;
  int n_frames = 0;
  int n_bins = 0;  // K + 1
  int sample_rate = 0;
  FramingConfig framing;

  double at(int frame, int bin) const {
    return values[static_cast<std::size_t>(frame) * n_bins + bin];
  }
  const double* frame(int n) const { return &values[static_cast<std::size_t>(n) * n_bins]; }
};

enum class Quarter { Q1, Q2, Q3, Q4, Half };

// Per-frame feature family; the enum pins dimensionality and the bin ranges
// of the envelope features.
enum class FeatureKind : std::uint8_t {
  QseQ1 = 0,
  QseQ2 = 1,
  QseQ3 = 2,
  QseQ4 = 3,
  QseHalf = 4,
  Mfcc = 5,
  Lfbe = 6,
};

FeatureKind qse_kind(Quarter q);
int feature_dim(FeatureKind kind);
std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

// n_frames x dim float32 feature rows X(n, k).
struct FeatureMatrix {
  std::vector<float> values;
  int n_frames = 0;
  int dim = 0;
  FeatureKind kind = FeatureKind::QseQ1;

  float at(int frame, int d) const {
    return values[static_cast<std::size_t>(frame) * dim + d];
  }
  float* row(int n) { return &values[static_cast<std::size_t>(n) * dim]; }
  const float* row(int n) const { return &values[static_cast<std::size_t>(n) * dim]; }
};

// Per-dimension standardization statistics, fitted on train data only.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8
  std::string fitted_on = "train";
};

// Windowed radix-2 STFT magnitudes; N = 1 + floor((len - frame_size)/hop).
Spectrogram spectrogram(const AudioClip& clip, const FramingConfig& cfg = {});

// Log-magnitude envelope restricted to one quarter (or the lower half) of
// the positive-frequency bins. The DC bin is excluded: Q1 is bins 1..K/4.
FeatureMatrix qse(const Spectrogram& spec, Quarter quarter);

// Triangular mel filterbank, peak-normalized rows; n_mels x (K+1), row-major.
std::vector<double> mel_filterbank(int n_mels, int fft_size, int sample_rate);

// Log mel filterbank energies of the power spectrum; D = n_mels.
FeatureMatrix lfbe(const Spectrogram& spec, int n_mels = 64);

// Orthonormal DCT-II of the LFBE rows, first n_coeffs retained.
FeatureMatrix mfcc(const Spectrogram& spec, int n_mels = 64, int n_coeffs = 64);

NormStats fit_norm_stats(const std::vector<FeatureMatrix>& features);
FeatureMatrix apply_norm(const FeatureMatrix& fm, const NormStats& stats);

// Binary container: magic QSEF, u32 version, u8 kind, u32 N, u32 D, then
// N*D little-endian float32 row-major.
void save_features(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& json_text);

}  // namespace whisperline

#endif  // WHISPERLINE_DSP_HPP
