#ifndef WHISPERLINE_SYNTH_HPP
#define WHISPERLINE_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "whisperline/audio_io.hpp"

namespace whisperline {

// Parameters for the synthetic voiced/noise-excited corpus. Normal
// utterances are driven by a band-limited impulse train, whispered ones by
// white noise through the same resonator bank with raised, widened formants.
struct SynthConfig {
  int n_per_class = 10;
  double duration_s = 5.2;
  int sample_rate = 16000;
  double f0_min = 100.0;
  double f0_max = 250.0;
  double formant_shift = 0.15;     // whisper formant centers scaled by 1 + shift
  double formant_bw_scale = 2.0;   // whisper bandwidths widened
  double silence_pad_s = 0.25;     // each side
  double test_fraction = 0.2;      // corpus split; utterances per speaker fixed at 8
  std::uint64_t seed = 0;

  void validate() const;
};

std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& json_text);

// Deterministic in (cfg.seed, label, index). Normal and Whisper clips at the
// same index share one articulation plan (a parallel corpus), differing only
// in excitation and the whisper formant modifications.
AudioClip synth_utterance(const SynthConfig& cfg, Label label, std::uint64_t index);

// Writes 2*n_per_class WAVs, a manifest.csv and a synth_config.json sidecar
// into out_dir. Split is stratified by class with disjoint speaker draws
// between train and test.
Manifest generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace whisperline

#endif  // WHISPERLINE_SYNTH_HPP
