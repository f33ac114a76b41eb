#include "whisperline/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "whisperline/error.hpp"
#include "whisperline/rng.hpp"

namespace whisperline {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

double mean_square(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// Modified Bessel function of the first kind, order 0 (power series).
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < sum * 1e-16) break;
  }
  return sum;
}

}  // namespace

std::string to_string(Label label) {
  switch (label) {
    case Label::Normal:
      return "normal";
    case Label::Whisper:
      return "whisper";
    case Label::Unlabeled:
      return "unlabeled";
  }
  return "unlabeled";
}

std::string to_string(Split split) {
  return split == Split::Train ? "train" : "test";
}

Label label_from_string(const std::string& s) {
  if (s == "normal") return Label::Normal;
  if (s == "whisper") return Label::Whisper;
  throw ManifestError("unknown label token: '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ManifestError("unknown split token: '" + s + "'");
}

std::size_t Manifest::count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.split == split) ++n;
  return n;
}

std::size_t Manifest::count(Split split, Label label) const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.split == split && e.label == label) ++n;
  return n;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path.string());

  std::array<unsigned char, 12> riff{};
  if (!in.read(reinterpret_cast<char*>(riff.data()), 12))
    throw FormatError("truncated RIFF header: " + path.string());
  if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path.string());

  bool have_fmt = false;
  std::uint16_t format_code = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<unsigned char> data;
  bool have_data = false;

  std::array<unsigned char, 8> chunk{};
  while (in.read(reinterpret_cast<char*>(chunk.data()), 8)) {
    const std::uint32_t size = read_u32le(chunk.data() + 4);
    if (std::memcmp(chunk.data(), "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("fmt chunk too small: " + path.string());
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
        throw FormatError("truncated fmt chunk: " + path.string());
      format_code = read_u16le(fmt.data());
      channels = read_u16le(fmt.data() + 2);
      rate = read_u32le(fmt.data() + 4);
      bits = read_u16le(fmt.data() + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk.data(), "data", 4) == 0) {
      data.resize(size);
      if (!in.read(reinterpret_cast<char*>(data.data()), size))
        throw FormatError("truncated data chunk: " + path.string());
      have_data = true;
    } else {
      in.seekg(size, std::ios::cur);
    }
    if (size & 1) in.seekg(1, std::ios::cur);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data) throw FormatError("missing fmt or data chunk: " + path.string());
  if (format_code != 1) throw UnsupportedFormat("only PCM (format 1) supported: " + path.string());
  if (channels != 1) throw UnsupportedFormat("only mono supported: " + path.string());
  if (bits != 16) throw UnsupportedFormat("only 16-bit PCM supported: " + path.string());
  if (rate != 44100 && rate != 16000)
    throw UnsupportedRate("unsupported sample rate " + std::to_string(rate) + ": " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.utterance_id = path.stem().string();
  clip.label = Label::Unlabeled;
  const std::size_t n = data.size() / 2;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s =
        static_cast<std::int16_t>(static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8)));
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate <= 0) throw FormatError("clip has no sample rate");
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_bytes);
  for (double v : clip.samples) {
    const long q = std::lround(v * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767));
    put_u16le(out, static_cast<std::uint16_t>(s));
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("short write: " + path.string());
}

namespace {

// Interpolation kernel tables for the 160/441 conversion: 160 phases of
// 64 taps. Tap j of phase p holds g(j - 32 + p/160) where g is the Kaiser-
// windowed sinc with 8 kHz cutoff, expressed in input-sample units. Each
// phase is normalized to unit DC gain.
struct ResampleTable {
  static constexpr int kPhases = 160;
  static constexpr int kTaps = 64;
  static constexpr int kHalf = kTaps / 2;
  std::vector<double> taps;  // kPhases * kTaps

  ResampleTable() {
    const double beta = 8.0;
    // Design cutoff shaded to 0.925 x the output Nyquist: with 64 taps the
    // Kaiser transition band is ~3.5 kHz wide, so a literal 8 kHz design
    // point would leak audible aliases (only ~26 dB down at 9 kHz). 7.4 kHz
    // puts 9 kHz more than 55 dB into the stopband and leaves the passband
    // flat through 6 kHz.
    const double cutoff = 7400.0 / 44100.0;  // cycles per input sample
    const double i0_beta = bessel_i0(beta);
    taps.resize(static_cast<std::size_t>(kPhases) * kTaps);
    for (int p = 0; p < kPhases; ++p) {
      double sum = 0.0;
      for (int j = 0; j < kTaps; ++j) {
        const double tau = (j - kHalf) + static_cast<double>(p) / kPhases;
        const double u = tau / kHalf;
        double w = 0.0;
        if (std::abs(u) <= 1.0) w = bessel_i0(beta * std::sqrt(1.0 - u * u)) / i0_beta;
        const double x = 2.0 * cutoff * tau;
        const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
        const double g = 2.0 * cutoff * sinc * w;
        taps[static_cast<std::size_t>(p) * kTaps + j] = g;
        sum += g;
      }
      for (int j = 0; j < kTaps; ++j) taps[static_cast<std::size_t>(p) * kTaps + j] /= sum;
    }
  }
};

const ResampleTable& resample_table() {
  static const ResampleTable table;
  return table;
}

}  // namespace

AudioClip resample_44k_to_16k(const AudioClip& clip) {
  if (clip.sample_rate != 44100)
    throw UnsupportedRate("resample_44k_to_16k requires 44100 Hz input, got " +
                          std::to_string(clip.sample_rate));
  const auto& table = resample_table();
  const std::size_t n_in = clip.samples.size();
  const std::size_t n_out = n_in * 160 / 441;

  AudioClip out;
  out.sample_rate = 16000;
  out.utterance_id = clip.utterance_id;
  out.label = clip.label;
  out.samples.resize(n_out);

  for (std::size_t m = 0; m < n_out; ++m) {
    // output time in input samples: c = m*441/160 = q + p/160
    const std::uint64_t num = static_cast<std::uint64_t>(m) * 441;
    const std::int64_t q = static_cast<std::int64_t>(num / 160);
    const int p = static_cast<int>(num % 160);
    const double* h = &table.taps[static_cast<std::size_t>(p) * ResampleTable::kTaps];
    double acc = 0.0;
    for (int j = 0; j < ResampleTable::kTaps; ++j) {
      // tap j corresponds to input index q - (j - kHalf) = q + kHalf - j
      const std::int64_t idx = q + ResampleTable::kHalf - j;
      if (idx >= 0 && idx < static_cast<std::int64_t>(n_in))
        acc += h[j] * static_cast<double>(clip.samples[static_cast<std::size_t>(idx)]);
    }
    out.samples[m] = acc;
  }
  return out;
}

AudioClip add_white_noise(const AudioClip& clip, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  const double p_signal = mean_square(clip.samples);
  if (p_signal <= 0.0) throw ZeroSignalPower("cannot set an SNR against a silent clip");

  const std::size_t n = clip.samples.size();
  std::vector<double> noise(n);
  Rng rng(seed);
  double p_noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] = rng.gaussian();
    p_noise += noise[i] * noise[i];
  }
  p_noise /= static_cast<double>(n);
  if (p_noise <= 0.0) throw ZeroSignalPower("degenerate noise draw");

  // Scale so the realized power ratio hits the requested SNR exactly.
  const double target = p_signal / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target / p_noise);

  AudioClip out = clip;
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = clip.samples[i] + scale * noise[i];
  return out;
}

double measure_snr(const AudioClip& clean, const AudioClip& noisy) {
  if (clean.samples.size() != noisy.samples.size() || clean.sample_rate != noisy.sample_rate)
    throw ShapeError("measure_snr requires equal lengths and rates");
  double p_clean = 0.0, p_diff = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double c = clean.samples[i];
    const double d = noisy.samples[i] - c;
    p_clean += c * c;
    p_diff += d * d;
  }
  if (p_diff == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p_clean / p_diff);
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  std::string line;
  if (!std::getline(in, line)) throw ManifestError("empty manifest: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utterance_id,path,label,split")
    throw ManifestError("bad manifest header (expected utterance_id,path,label,split): " +
                        path.string());

  Manifest manifest;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::array<std::string, 4> fields;
    std::size_t field = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= 4) throw ManifestError("line " + std::to_string(line_no) + ": too many fields");
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != 4) throw ManifestError("line " + std::to_string(line_no) + ": expected 4 fields");

    ManifestEntry entry;
    entry.utterance_id = fields[0];
    if (entry.utterance_id.empty())
      throw ManifestError("line " + std::to_string(line_no) + ": empty utterance_id");
    if (!seen.insert(entry.utterance_id).second)
      throw ManifestError("line " + std::to_string(line_no) + ": duplicate utterance_id '" +
                          entry.utterance_id + "'");
    std::filesystem::path p(fields[1]);
    entry.path = p.is_absolute() ? p : base / p;
    if (!std::filesystem::exists(entry.path))
      throw ManifestError("line " + std::to_string(line_no) + ": path not found: " +
                          entry.path.string());
    try {
      entry.label = label_from_string(fields[2]);
      entry.split = split_from_string(fields[3]);
    } catch (const ManifestError& e) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + e.what());
    }
    manifest.entries.push_back(std::move(entry));
  }

  if (manifest.count(Split::Train, Label::Normal) == 0 ||
      manifest.count(Split::Train, Label::Whisper) == 0)
    throw ManifestError("train split must contain both labels: " + path.string());
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "utterance_id,path,label,split\n";
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  for (const auto& e : manifest.entries) {
    auto rel = e.path.lexically_proximate(base);
    os << e.utterance_id << ',' << rel.generic_string() << ',' << to_string(e.label) << ','
       << to_string(e.split) << '\n';
  }
  if (!os) throw IoError("short write: " + path.string());
}

}  // namespace whisperline
