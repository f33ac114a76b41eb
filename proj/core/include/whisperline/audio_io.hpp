#ifndef WHISPERLINE_AUDIO_IO_HPP
#define WHISPERLINE_AUDIO_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace whisperline {

enum class Label { Normal = 0, Whisper = 1, Unlabeled = 2 };

enum class Split { Train, Test };

std::string to_string(Label label);
std::string to_string(Split split);
Label label_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// A labeled mono waveform. Samples are real amplitudes in [-1, 1] after
// ingestion; processing stages (noise injection) may push them outside that
// range, clipping happens on write only.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string utterance_id;
  Label label = Label::Unlabeled;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct ManifestEntry {
  std::string utterance_id;
  std::filesystem::path path;
  Label label = Label::Unlabeled;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Split split) const;
  std::size_t count(Split split, Label label) const;
};

// RIFF/WAVE, PCM 16-bit mono, 44100 or 16000 Hz. Samples scaled by 1/32768.
AudioClip read_wav(const std::filesystem::path& path);

// Clamps to [-1, 1] and quantizes with round-to-nearest; read_wav(write_wav(c))
// is within one quantization step (1/32768) of c per sample.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

// Rational 160/441 polyphase resampler (windowed sinc, Kaiser beta=8,
// 64 taps per phase, 8 kHz cutoff). Only the 44100 -> 16000 conversion the
// experiments need is supported.
AudioClip resample_44k_to_16k(const AudioClip& clip);

// Adds Gaussian white noise scaled so the realized SNR over the full
// utterance equals snr_db exactly (powers are means of squared samples).
// Deterministic given seed. Output is not re-normalized.
AudioClip add_white_noise(const AudioClip& clip, double snr_db, std::uint64_t seed);

// 10*log10(P_clean / P_(noisy - clean)); +infinity when the clips are equal.
double measure_snr(const AudioClip& clean, const AudioClip& noisy);

// CSV with header `utterance_id,path,label,split`. Relative paths resolve
// against the manifest's directory; every path must exist at load time.
Manifest load_manifest(const std::filesystem::path& path);

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace whisperline

#endif  // WHISPERLINE_AUDIO_IO_HPP
