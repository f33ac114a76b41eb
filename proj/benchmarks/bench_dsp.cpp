#include <benchmark/benchmark.h>

#include <cmath>

#include "whisperline/audio_io.hpp"
#include "whisperline/dsp.hpp"
#include "whisperline/fft.hpp"
#include "whisperline/rng.hpp"
#include "whisperline/synth.hpp"

using namespace whisperline;

namespace {

AudioClip second_of_audio(int rate) {
  SynthConfig cfg;
  cfg.duration_s = 1.0;
  cfg.silence_pad_s = 0.1;
  cfg.sample_rate = rate;
  cfg.seed = 5;
  return synth_utterance(cfg, Label::Normal, 0);
}

}  // namespace

static void BM_Fft1024(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> frame(1024);
  for (auto& v : frame) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    auto mags = fft_magnitudes(frame);
    benchmark::DoNotOptimize(mags.data());
  }
}
BENCHMARK(BM_Fft1024);

static void BM_Dct64(benchmark::State& state) {
  Rng rng(2);
  std::vector<double> x(64);
  for (auto& v : x) v = rng.uniform(-5.0, 5.0);
  for (auto _ : state) {
    auto c = dct2_orthonormal(x);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_Dct64);

static void BM_SpectrogramPerSecond(benchmark::State& state) {
  const AudioClip clip = second_of_audio(16000);
  for (auto _ : state) {
    const Spectrogram spec = spectrogram(clip, {});
    benchmark::DoNotOptimize(spec.values.data());
  }
}
BENCHMARK(BM_SpectrogramPerSecond);

static void BM_QsePerSecond(benchmark::State& state) {
  const AudioClip clip = second_of_audio(16000);
  const Spectrogram spec = spectrogram(clip, {});
  for (auto _ : state) {
    const FeatureMatrix fm = qse(spec, Quarter::Q1);
    benchmark::DoNotOptimize(fm.values.data());
  }
}
BENCHMARK(BM_QsePerSecond);

static void BM_MfccPerSecond(benchmark::State& state) {
  const AudioClip clip = second_of_audio(16000);
  const Spectrogram spec = spectrogram(clip, {});
  for (auto _ : state) {
    const FeatureMatrix fm = mfcc(spec);
    benchmark::DoNotOptimize(fm.values.data());
  }
}
BENCHMARK(BM_MfccPerSecond);

static void BM_ResampleSecond(benchmark::State& state) {
  const AudioClip clip = second_of_audio(44100);
  for (auto _ : state) {
    const AudioClip out = resample_44k_to_16k(clip);
    benchmark::DoNotOptimize(out.samples.data());
  }
}
BENCHMARK(BM_ResampleSecond);

static void BM_SynthUtterance(benchmark::State& state) {
  SynthConfig cfg;
  cfg.duration_s = 1.0;
  cfg.silence_pad_s = 0.1;
  cfg.seed = 9;
  std::uint64_t i = 0;
  for (auto _ : state) {
    const AudioClip clip = synth_utterance(cfg, Label::Normal, i++ & 7);
    benchmark::DoNotOptimize(clip.samples.data());
  }
}
BENCHMARK(BM_SynthUtterance);

BENCHMARK_MAIN();
