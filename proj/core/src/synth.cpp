#include "whisperline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "whisperline/error.hpp"
#include "whisperline/rng.hpp"

namespace whisperline {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kUttsPerSpeaker = 8;
constexpr double kHarmonicRolloff = 1.4;   // amplitude 1/k^rolloff
constexpr double kHarmonicLimitHz = 5000.0;
constexpr double kRecordingFloorDb = -35.0;  // white floor below active RMS
constexpr double kEdgeRampS = 0.005;
// Test-split utterance indices start here so speaker parameter draws never
// collide with train-split speakers.
constexpr std::uint64_t kTestIndexBase = 1ULL << 20;

struct Formant {
  double freq_hz;
  double bandwidth_hz;
};

struct Segment {
  double start_s;
  double duration_s;
  double f0_start;
  double f0_end;
  double gain;
  Formant formants[3];  // normal-speech values; whisper modifies them
};

struct UtterancePlan {
  std::vector<Segment> segments;
  double target_rms;
};

// Speaker formant targets are a pure function of (seed, speaker), so
// utterances of one speaker share a vocal-tract identity.
void speaker_formants(std::uint64_t seed, std::uint64_t speaker, Formant out[3]) {
  Rng rng(mix64(mix64(seed, hash_str("speaker")), speaker));
  out[0] = {rng.uniform(300.0, 900.0), rng.uniform(60.0, 110.0)};
  out[1] = {rng.uniform(950.0, 2200.0), rng.uniform(70.0, 130.0)};
  out[2] = {rng.uniform(2250.0, 3000.0), rng.uniform(80.0, 150.0)};
}

UtterancePlan make_plan(const SynthConfig& cfg, std::uint64_t index) {
  Rng rng(mix64(mix64(cfg.seed, hash_str("plan")), index));
  Formant base[3];
  speaker_formants(cfg.seed, index / kUttsPerSpeaker, base);

  const double active_s = cfg.duration_s - 2.0 * cfg.silence_pad_s;
  const int n_segments = static_cast<int>(rng.uniform_int(3, 6));

  // random proportions, each at least a third of a uniform share
  std::vector<double> weights(n_segments);
  double wsum = 0.0;
  for (auto& w : weights) {
    w = rng.uniform(1.0, 3.0);
    wsum += w;
  }

  // segment ranges span the vowel space; the speaker tuple biases the draws
  static constexpr double kFormantLo[3] = {300.0, 950.0, 2250.0};
  static constexpr double kFormantHi[3] = {900.0, 2200.0, 3000.0};
  static constexpr double kBwLo[3] = {60.0, 70.0, 80.0};
  static constexpr double kBwHi[3] = {110.0, 130.0, 150.0};

  UtterancePlan plan;
  plan.target_rms = rng.uniform(0.04, 0.09);
  double t = cfg.silence_pad_s;
  for (int s = 0; s < n_segments; ++s) {
    Segment seg;
    seg.start_s = t;
    seg.duration_s = active_s * weights[s] / wsum;
    t += seg.duration_s;
    const double f0_a = rng.uniform(cfg.f0_min, cfg.f0_max);
    const double drift = cfg.f0_max > cfg.f0_min
                             ? std::clamp(f0_a * rng.uniform(-0.08, 0.08), cfg.f0_min - f0_a,
                                          cfg.f0_max - f0_a)
                             : 0.0;
    seg.f0_start = f0_a;
    seg.f0_end = f0_a + drift;
    seg.gain = rng.uniform(0.35, 1.0);
    for (int f = 0; f < 3; ++f) {
      // each "phone" draws fresh formants, pulled a quarter of the way (in
      // log frequency) toward the speaker's targets so a vocal-tract
      // identity persists without making utterances self-similar
      const double vowel = rng.uniform(kFormantLo[f], kFormantHi[f]);
      seg.formants[f].freq_hz =
          std::exp(0.75 * std::log(vowel) + 0.25 * std::log(base[f].freq_hz));
      const double bw = rng.uniform(kBwLo[f], kBwHi[f]);
      seg.formants[f].bandwidth_hz =
          std::exp(0.75 * std::log(bw) + 0.25 * std::log(base[f].bandwidth_hz));
    }
    plan.segments.push_back(seg);
  }
  return plan;
}

// Unit-peak two-pole resonator.
struct Resonator {
  double a1, a2, b0;
  double z1 = 0.0, z2 = 0.0;

  Resonator(double freq_hz, double bandwidth_hz, double sample_rate) {
    const double theta = 2.0 * kPi * freq_hz / sample_rate;
    const double r = std::exp(-kPi * bandwidth_hz / sample_rate);
    a1 = -2.0 * r * std::cos(theta);
    a2 = r * r;
    // normalize to unit gain at the resonance frequency
    const double re = 1.0 + a1 * std::cos(theta) + a2 * std::cos(2.0 * theta);
    const double im = -a1 * std::sin(theta) - a2 * std::sin(2.0 * theta);
    b0 = std::sqrt(re * re + im * im);
  }

  double step(double x) {
    const double y = b0 * x - a1 * z1 - a2 * z2;
    z2 = z1;
    z1 = y;
    return y;
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (sample_rate != 16000 && sample_rate != 44100)
    throw ConfigError("sample_rate must be 16000 or 44100");
  if (!(f0_min > 50.0 && f0_max < sample_rate / 8.0 && f0_min <= f0_max))
    throw ConfigError("f0 range must lie within (50, sample_rate/8)");
  if (!(duration_s > 2.0 * silence_pad_s))
    throw ConfigError("duration_s must exceed twice the silence padding");
  if (formant_bw_scale < 1.0) throw ConfigError("formant_bw_scale must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 0.5))
    throw ConfigError("test_fraction must be in (0, 0.5)");
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["n_per_class"] = cfg.n_per_class;
  j["duration_s"] = cfg.duration_s;
  j["sample_rate"] = cfg.sample_rate;
  j["f0_min"] = cfg.f0_min;
  j["f0_max"] = cfg.f0_max;
  j["formant_shift"] = cfg.formant_shift;
  j["formant_bw_scale"] = cfg.formant_bw_scale;
  j["silence_pad_s"] = cfg.silence_pad_s;
  j["test_fraction"] = cfg.test_fraction;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  SynthConfig cfg;
  cfg.n_per_class = j.value("n_per_class", cfg.n_per_class);
  cfg.duration_s = j.value("duration_s", cfg.duration_s);
  cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
  cfg.f0_min = j.value("f0_min", cfg.f0_min);
  cfg.f0_max = j.value("f0_max", cfg.f0_max);
  cfg.formant_shift = j.value("formant_shift", cfg.formant_shift);
  cfg.formant_bw_scale = j.value("formant_bw_scale", cfg.formant_bw_scale);
  cfg.silence_pad_s = j.value("silence_pad_s", cfg.silence_pad_s);
  cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

AudioClip synth_utterance(const SynthConfig& cfg, Label label, std::uint64_t index) {
  cfg.validate();
  if (label == Label::Unlabeled) throw ConfigError("synth_utterance needs Normal or Whisper");

  const double fs = cfg.sample_rate;
  const std::size_t n_samples = static_cast<std::size_t>(std::llround(cfg.duration_s * fs));
  const UtterancePlan plan = make_plan(cfg, index);
  const bool whisper = label == Label::Whisper;

  // Excitation noise is a per-(label, index) stream.
  Rng noise_rng(mix64(mix64(mix64(cfg.seed, hash_str("excitation")), index),
                      static_cast<std::uint64_t>(label)));

  std::vector<double> x(n_samples, 0.0);
  double phase = 0.0;  // harmonic phase carries across segments
  const double f_limit = std::min(kHarmonicLimitHz, 0.45 * fs);
  const std::size_t ramp_n = static_cast<std::size_t>(std::llround(kEdgeRampS * fs));

  for (const Segment& seg : plan.segments) {
    const std::size_t s0 = static_cast<std::size_t>(std::llround(seg.start_s * fs));
    const std::size_t s1 = std::min(
        n_samples, static_cast<std::size_t>(std::llround((seg.start_s + seg.duration_s) * fs)));
    if (s1 <= s0) continue;
    const std::size_t len = s1 - s0;

    Resonator bank[3] = {
        Resonator(seg.formants[0].freq_hz * (whisper ? 1.0 + cfg.formant_shift : 1.0),
                  seg.formants[0].bandwidth_hz * (whisper ? cfg.formant_bw_scale : 1.0), fs),
        Resonator(seg.formants[1].freq_hz * (whisper ? 1.0 + cfg.formant_shift : 1.0),
                  seg.formants[1].bandwidth_hz * (whisper ? cfg.formant_bw_scale : 1.0), fs),
        Resonator(seg.formants[2].freq_hz * (whisper ? 1.0 + cfg.formant_shift : 1.0),
                  seg.formants[2].bandwidth_hz * (whisper ? cfg.formant_bw_scale : 1.0), fs),
    };

    const double f0_hi = std::max(seg.f0_start, seg.f0_end);
    const int n_harmonics = std::max(1, static_cast<int>(f_limit / f0_hi));

    for (std::size_t i = 0; i < len; ++i) {
      double excitation;
      if (whisper) {
        excitation = noise_rng.gaussian();
      } else {
        const double frac = static_cast<double>(i) / len;
        const double f0 = seg.f0_start + (seg.f0_end - seg.f0_start) * frac;
        phase += 2.0 * kPi * f0 / fs;
        if (phase > 2.0 * kPi * 1e6) phase = std::fmod(phase, 2.0 * kPi);
        excitation = 0.0;
        for (int k = 1; k <= n_harmonics; ++k)
          excitation += std::cos(k * phase) / std::pow(k, kHarmonicRolloff);
      }
      double y = excitation;
      for (auto& reso : bank) y = reso.step(y);

      double g = seg.gain;
      if (i < ramp_n) g *= static_cast<double>(i) / ramp_n;
      if (len - 1 - i < ramp_n) g *= static_cast<double>(len - 1 - i) / ramp_n;
      x[s0 + i] += g * y;
    }
  }

  // recording floor over the whole clip, scaled against the active RMS
  double active_ms = 0.0;
  std::size_t active_n = 0;
  for (const Segment& seg : plan.segments) {
    const std::size_t s0 = static_cast<std::size_t>(std::llround(seg.start_s * fs));
    const std::size_t s1 = std::min(
        n_samples, static_cast<std::size_t>(std::llround((seg.start_s + seg.duration_s) * fs)));
    for (std::size_t i = s0; i < s1; ++i) active_ms += x[i] * x[i];
    active_n += s1 - s0;
  }
  const double active_rms = active_n > 0 ? std::sqrt(active_ms / active_n) : 0.0;
  const double floor_rms = active_rms * std::pow(10.0, kRecordingFloorDb / 20.0);
  Rng floor_rng(mix64(mix64(mix64(cfg.seed, hash_str("floor")), index),
                      static_cast<std::uint64_t>(label)));
  for (auto& v : x) v += floor_rms * floor_rng.gaussian();

  // Energy normalization: both classes draw the target RMS from one shared
  // distribution (via the paired plan), so loudness carries no class
  // information. A headroom rescale guards the PCM range.
  double ms = 0.0;
  for (double v : x) ms += v * v;
  const double rms = std::sqrt(ms / static_cast<double>(n_samples));
  double scale = rms > 0.0 ? plan.target_rms / rms : 0.0;
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v * scale));
  if (peak > 0.95) scale *= 0.95 / peak;

  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.label = label;
  clip.utterance_id = (whisper ? "whisper_" : "normal_") + std::to_string(index);
  clip.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    clip.samples[i] = x[i] * scale;
  return clip;
}

Manifest generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

  const int n_test = std::max(1, static_cast<int>(std::lround(cfg.n_per_class * cfg.test_fraction)));
  const int n_train = cfg.n_per_class - n_test;
  if (n_train < 1) throw ConfigError("split leaves no train utterances");

  Manifest manifest;
  for (Label label : {Label::Normal, Label::Whisper}) {
    for (int i = 0; i < cfg.n_per_class; ++i) {
      const bool is_test = i >= n_train;
      const std::uint64_t index =
          is_test ? kTestIndexBase + static_cast<std::uint64_t>(i - n_train)
                  : static_cast<std::uint64_t>(i);
      AudioClip clip = synth_utterance(cfg, label, index);
      const auto file = out_dir / (clip.utterance_id + ".wav");
      write_wav(clip, file);
      manifest.entries.push_back(
          {clip.utterance_id, file, label, is_test ? Split::Test : Split::Train});
    }
  }

  save_manifest(manifest, out_dir / "manifest.csv");
  std::ofstream cfg_os(out_dir / "synth_config.json", std::ios::trunc);
  cfg_os << synth_config_to_json(cfg) << '\n';
  if (!cfg_os) throw IoError("cannot write synth_config.json");
  return manifest;
}

}  // namespace whisperline
