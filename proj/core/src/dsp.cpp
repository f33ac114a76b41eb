#include "whisperline/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "whisperline/error.hpp"
#include "whisperline/fft.hpp"

namespace whisperline {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;
constexpr double kStdFloor = 1e-8;

std::vector<double> make_window(Window w, int n) {
  std::vector<double> win(n, 1.0);
  switch (w) {
    case Window::Hann:
      for (int i = 0; i < n; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
      break;
    case Window::Hamming:
      for (int i = 0; i < n; ++i) win[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / n);
      break;
    case Window::Rect:
      break;
  }
  return win;
}

double mel_of_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double hz_of_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

std::string to_string(Window w) {
  switch (w) {
    case Window::Hann:
      return "hann";
    case Window::Hamming:
      return "hamming";
    case Window::Rect:
      return "rect";
  }
  return "hann";
}

Window window_from_string(const std::string& s) {
  if (s == "hann") return Window::Hann;
  if (s == "hamming") return Window::Hamming;
  if (s == "rect") return Window::Rect;
  throw ConfigError("unknown window: '" + s + "'");
}

FeatureKind qse_kind(Quarter q) {
  switch (q) {
    case Quarter::Q1:
      return FeatureKind::QseQ1;
    case Quarter::Q2:
      return FeatureKind::QseQ2;
    case Quarter::Q3:
      return FeatureKind::QseQ3;
    case Quarter::Q4:
      return FeatureKind::QseQ4;
    case Quarter::Half:
      return FeatureKind::QseHalf;
  }
  throw ConfigError("bad quarter");
}

int feature_dim(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::QseQ1:
    case FeatureKind::QseQ2:
    case FeatureKind::QseQ3:
    case FeatureKind::QseQ4:
      return 128;
    case FeatureKind::QseHalf:
      return 256;
    case FeatureKind::Mfcc:
    case FeatureKind::Lfbe:
      return 64;
  }
  throw ConfigError("bad feature kind");
}

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::QseQ1:
      return "qse_q1";
    case FeatureKind::QseQ2:
      return "qse_q2";
    case FeatureKind::QseQ3:
      return "qse_q3";
    case FeatureKind::QseQ4:
      return "qse_q4";
    case FeatureKind::QseHalf:
      return "qse_half";
    case FeatureKind::Mfcc:
      return "mfcc";
    case FeatureKind::Lfbe:
      return "lfbe";
  }
  return "qse_q1";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "qse_q1") return FeatureKind::QseQ1;
  if (s == "qse_q2") return FeatureKind::QseQ2;
  if (s == "qse_q3") return FeatureKind::QseQ3;
  if (s == "qse_q4") return FeatureKind::QseQ4;
  if (s == "qse_half") return FeatureKind::QseHalf;
  if (s == "mfcc") return FeatureKind::Mfcc;
  if (s == "lfbe") return FeatureKind::Lfbe;
  throw ConfigError("unknown feature kind: '" + s + "'");
}

Spectrogram spectrogram(const AudioClip& clip, const FramingConfig& cfg) {
  const int frame_size = cfg.frame_size;
  if (frame_size <= 0 || (frame_size & (frame_size - 1)) != 0)
    throw ConfigError("frame_size must be a positive power of two");
  if (cfg.hop < 1) throw ConfigError("hop must be >= 1");
  if (static_cast<int>(clip.samples.size()) < frame_size)
    throw TooShort("clip shorter than one frame (" + std::to_string(clip.samples.size()) + " < " +
                   std::to_string(frame_size) + ")");

  const int n_frames =
      1 + static_cast<int>((clip.samples.size() - static_cast<std::size_t>(frame_size)) / cfg.hop);
  const int n_bins = frame_size / 2 + 1;
  const auto win = make_window(cfg.window, frame_size);

  Spectrogram spec;
  spec.n_frames = n_frames;
  spec.n_bins = n_bins;
  spec.sample_rate = clip.sample_rate;
  spec.framing = cfg;
  spec.values.resize(static_cast<std::size_t>(n_frames) * n_bins);

  std::vector<double> frame(frame_size);
  for (int n = 0; n < n_frames; ++n) {
    const std::size_t off = static_cast<std::size_t>(n) * cfg.hop;
    for (int i = 0; i < frame_size; ++i)
      frame[i] = clip.samples[off + i] * win[i];
    const auto mags = fft_magnitudes(frame);
    std::copy(mags.begin(), mags.end(), spec.values.begin() + static_cast<std::size_t>(n) * n_bins);
  }
  return spec;
}

FeatureMatrix qse(const Spectrogram& spec, Quarter quarter) {
  const int half = spec.framing.half_bins();
  if (half != 512) throw ShapeError("qse requires K = 512 (1024-point frames), got K = " +
                                    std::to_string(half));
  int first = 0, count = 0;
  switch (quarter) {
    case Quarter::Q1:
      first = 1;
      count = 128;
      break;
    case Quarter::Q2:
      first = 129;
      count = 128;
      break;
    case Quarter::Q3:
      first = 257;
      count = 128;
      break;
    case Quarter::Q4:
      first = 385;
      count = 128;
      break;
    case Quarter::Half:
      first = 1;
      count = 256;
      break;
  }

  FeatureMatrix fm;
  fm.kind = qse_kind(quarter);
  fm.n_frames = spec.n_frames;
  fm.dim = count;
  fm.values.resize(static_cast<std::size_t>(spec.n_frames) * count);
  for (int n = 0; n < spec.n_frames; ++n) {
    const double* src = spec.frame(n);
    float* dst = fm.row(n);
    for (int k = 0; k < count; ++k)
      dst[k] = static_cast<float>(std::log(src[first + k] + kLogFloor));
  }
  return fm;
}

std::vector<double> mel_filterbank(int n_mels, int fft_size, int sample_rate) {
  if (n_mels < 2) throw ConfigError("n_mels must be >= 2");
  const int n_bins = fft_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = mel_of_hz(nyquist);

  std::vector<double> centers_hz(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers_hz[i] = hz_of_mel(mel_max * i / (n_mels + 1));

  std::vector<double> bank(static_cast<std::size_t>(n_mels) * n_bins, 0.0);
  const double hz_per_bin = static_cast<double>(sample_rate) / fft_size;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers_hz[m], mid = centers_hz[m + 1], hi = centers_hz[m + 2];
    double row_max = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * hz_per_bin;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      bank[static_cast<std::size_t>(m) * n_bins + k] = w;
      row_max = std::max(row_max, w);
    }
    if (row_max <= 0.0)
      throw ConfigError("mel filter " + std::to_string(m) +
                        " covers no frequency bin; reduce n_mels");
    for (int k = 0; k < n_bins; ++k) bank[static_cast<std::size_t>(m) * n_bins + k] /= row_max;
  }
  return bank;
}

namespace {

// Shared by lfbe/mfcc: log(filterbank * |S|^2 + floor) rows in double.
std::vector<double> lfbe_rows(const Spectrogram& spec, int n_mels) {
  const auto bank = mel_filterbank(n_mels, spec.framing.fft_size(), spec.sample_rate);
  const int n_bins = spec.n_bins;
  std::vector<double> rows(static_cast<std::size_t>(spec.n_frames) * n_mels);
  std::vector<double> power(n_bins);
  for (int n = 0; n < spec.n_frames; ++n) {
    const double* src = spec.frame(n);
    for (int k = 0; k < n_bins; ++k) power[k] = src[k] * src[k];
    for (int m = 0; m < n_mels; ++m) {
      const double* w = &bank[static_cast<std::size_t>(m) * n_bins];
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += w[k] * power[k];
      rows[static_cast<std::size_t>(n) * n_mels + m] = std::log(acc + kLogFloor);
    }
  }
  return rows;
}

}  // namespace

FeatureMatrix lfbe(const Spectrogram& spec, int n_mels) {
  const auto rows = lfbe_rows(spec, n_mels);
  FeatureMatrix fm;
  fm.kind = FeatureKind::Lfbe;
  fm.n_frames = spec.n_frames;
  fm.dim = n_mels;
  fm.values.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) fm.values[i] = static_cast<float>(rows[i]);
  return fm;
}

FeatureMatrix mfcc(const Spectrogram& spec, int n_mels, int n_coeffs) {
  if (n_coeffs > n_mels) throw ConfigError("n_coeffs must be <= n_mels");
  const auto rows = lfbe_rows(spec, n_mels);

  FeatureMatrix fm;
  fm.kind = FeatureKind::Mfcc;
  fm.n_frames = spec.n_frames;
  fm.dim = n_coeffs;
  fm.values.resize(static_cast<std::size_t>(spec.n_frames) * n_coeffs);
  std::vector<double> frame(n_mels);
  for (int n = 0; n < spec.n_frames; ++n) {
    std::copy_n(rows.begin() + static_cast<std::size_t>(n) * n_mels, n_mels, frame.begin());
    const auto coeffs = dct2_orthonormal(frame);
    float* dst = fm.row(n);
    for (int j = 0; j < n_coeffs; ++j) dst[j] = static_cast<float>(coeffs[j]);
  }
  return fm;
}

NormStats fit_norm_stats(const std::vector<FeatureMatrix>& features) {
  if (features.empty()) throw DataError("cannot fit normalization on an empty feature set");
  const int dim = features.front().dim;
  std::size_t total = 0;
  std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
  for (const auto& fm : features) {
    if (fm.dim != dim) throw ShapeError("feature dimension mismatch while fitting norm stats");
    for (int n = 0; n < fm.n_frames; ++n) {
      const float* row = fm.row(n);
      for (int d = 0; d < dim; ++d) {
        sum[d] += row[d];
        sumsq[d] += static_cast<double>(row[d]) * row[d];
      }
    }
    total += static_cast<std::size_t>(fm.n_frames);
  }
  if (total == 0) throw DataError("no frames in the feature set");

  NormStats stats;
  stats.mean.resize(dim);
  stats.stddev.resize(dim);
  for (int d = 0; d < dim; ++d) {
    const double mu = sum[d] / static_cast<double>(total);
    const double var = std::max(0.0, sumsq[d] / static_cast<double>(total) - mu * mu);
    stats.mean[d] = mu;
    stats.stddev[d] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

FeatureMatrix apply_norm(const FeatureMatrix& fm, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != fm.dim)
    throw ShapeError("norm stats dimension " + std::to_string(stats.mean.size()) +
                     " does not match feature dimension " + std::to_string(fm.dim));
  FeatureMatrix out = fm;
  for (int n = 0; n < fm.n_frames; ++n) {
    float* row = out.row(n);
    for (int d = 0; d < fm.dim; ++d)
      row[d] = static_cast<float>((row[d] - stats.mean[d]) / stats.stddev[d]);
  }
  return out;
}

void save_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  const char magic[4] = {'Q', 'S', 'E', 'F'};
  const std::uint32_t version = 1;
  const std::uint8_t kind = static_cast<std::uint8_t>(fm.kind);
  const std::uint32_t n = static_cast<std::uint32_t>(fm.n_frames);
  const std::uint32_t d = static_cast<std::uint32_t>(fm.dim);
  os.write(magic, 4);
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&kind), 1);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(fm.values.data()),
           static_cast<std::streamsize>(fm.values.size() * sizeof(float)));
  if (!os) throw IoError("short write: " + path.string());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open features: " + path.string());
  char magic[4];
  std::uint32_t version = 0, n = 0, d = 0;
  std::uint8_t kind = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&kind), 1);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  if (!in || std::memcmp(magic, "QSEF", 4) != 0)
    throw FormatError("bad feature file magic: " + path.string());
  if (version != 1) throw FormatError("unsupported feature file version: " + path.string());
  if (kind > static_cast<std::uint8_t>(FeatureKind::Lfbe))
    throw FormatError("bad feature kind tag: " + path.string());

  FeatureMatrix fm;
  fm.kind = static_cast<FeatureKind>(kind);
  fm.n_frames = static_cast<int>(n);
  fm.dim = static_cast<int>(d);
  fm.values.resize(static_cast<std::size_t>(n) * d);
  in.read(reinterpret_cast<char*>(fm.values.data()),
          static_cast<std::streamsize>(fm.values.size() * sizeof(float)));
  if (!in) throw FormatError("truncated feature file: " + path.string());
  return fm;
}

std::string norm_stats_to_json(const NormStats& stats) {
  nlohmann::json j;
  j["mean"] = stats.mean;
  j["std"] = stats.stddev;
  j["fitted_on"] = stats.fitted_on;
  return j.dump(2);
}

NormStats norm_stats_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  NormStats stats;
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.stddev = j.at("std").get<std::vector<double>>();
  stats.fitted_on = j.value("fitted_on", "train");
  if (stats.mean.size() != stats.stddev.size())
    throw FormatError("norm stats mean/std size mismatch");
  return stats;
}

}  // namespace whisperline
