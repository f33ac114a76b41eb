#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "testutil.hpp"
#include "whisperline/dsp.hpp"
#include "whisperline/error.hpp"
#include "whisperline/fft.hpp"
#include "whisperline/rng.hpp"
#include "whisperline/synth.hpp"

using namespace whisperline;

TEST_CASE("on-bin cosine with a rect window peaks at exactly N/2") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(1024);
  for (int n = 0; n < 1024; ++n) clip.samples[n] = std::cos(2.0 * M_PI * 64.0 * n / 1024.0);

  FramingConfig cfg;
  cfg.window = Window::Rect;
  const Spectrogram spec = spectrogram(clip, cfg);
  REQUIRE(spec.n_frames == 1);
  REQUIRE(spec.n_bins == 513);
  CHECK(spec.at(0, 64) == doctest::Approx(512.0).epsilon(1e-9));
  for (int k = 0; k < 513; ++k) {
    if (k == 64) continue;
    CHECK(spec.at(0, k) < 1e-9);
  }
}

TEST_CASE("all-zero clip gives the expected frame count of zeros") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(2048, 0.0);
  const Spectrogram spec = spectrogram(clip, {});
  CHECK(spec.n_frames == 9);  // 1 + (2048-1024)/128
  for (double v : spec.values) CHECK(v == 0.0);
}

TEST_CASE("clip shorter than one frame is rejected") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(1000, 0.1);
  CHECK_THROWS_AS(spectrogram(clip, {}), TooShort);
}

TEST_CASE("fft matches the direct DFT oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> frame(1024);
    for (auto& v : frame) v = rng.uniform(-1.0, 1.0);
    const auto fast = fft_magnitudes(frame);
    const auto direct = testutil::direct_dft_magnitudes(frame);
    REQUIRE(fast.size() == direct.size());
    for (std::size_t k = 0; k < fast.size(); ++k)
      CHECK(std::abs(fast[k] - direct[k]) < 1e-6);
  }
}

TEST_CASE("parseval identity on a windowed frame") {
  Rng rng(9);
  std::vector<double> frame(1024);
  for (int i = 0; i < 1024; ++i)
    frame[i] = rng.uniform(-1.0, 1.0) * (0.5 - 0.5 * std::cos(2.0 * M_PI * i / 1024));

  double time_energy = 0.0;
  for (double v : frame) time_energy += v * v;

  const auto mags = fft_magnitudes(frame);
  // full-spectrum sum: interior bins appear twice by conjugate symmetry
  double freq_energy = mags[0] * mags[0] + mags[512] * mags[512];
  for (int k = 1; k < 512; ++k) freq_energy += 2.0 * mags[k] * mags[k];
  freq_energy /= 1024.0;

  CHECK(freq_energy == doctest::Approx(time_energy).epsilon(1e-6));
}

TEST_CASE("framing timing at 16 kHz defaults") {
  const FramingConfig cfg;
  CHECK(cfg.frame_size == 1024);
  CHECK(cfg.hop == 128);
  CHECK(1000.0 * cfg.frame_size / 16000.0 == doctest::Approx(64.0));
  CHECK(1000.0 * cfg.hop / 16000.0 == doctest::Approx(8.0));
}

namespace {

Spectrogram random_spectrogram(int n_frames, std::uint64_t seed, int rate = 16000) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(1024 + 128 * (n_frames - 1));
  Rng rng(seed);
  for (auto& s : clip.samples) s = rng.uniform(-0.5, 0.5);
  return spectrogram(clip, {});
}

}  // namespace

TEST_CASE("qse quarters select the right bins") {
  const Spectrogram spec = random_spectrogram(9, 3);

  SUBCASE("Q1 dimensions") {
    const FeatureMatrix fm = qse(spec, Quarter::Q1);
    CHECK(fm.n_frames == 9);
    CHECK(fm.dim == 128);
    CHECK(fm.kind == FeatureKind::QseQ1);
    // bin 1 (DC excluded) maps to feature index 0
    CHECK(fm.at(0, 0) == doctest::Approx(std::log(spec.at(0, 1) + 1e-10)));
    CHECK(fm.at(3, 127) == doctest::Approx(std::log(spec.at(3, 128) + 1e-10)));
  }
  SUBCASE("Q3 spike at bin 300 appears at feature index 43") {
    Spectrogram spiked = spec;
    spiked.values[static_cast<std::size_t>(2) * 513 + 300] = 123.0;
    const FeatureMatrix fm = qse(spiked, Quarter::Q3);
    CHECK(fm.dim == 128);
    CHECK(fm.at(2, 43) == doctest::Approx(std::log(123.0 + 1e-10)));
  }
  SUBCASE("half envelope is 256-dimensional") {
    const FeatureMatrix fm = qse(spec, Quarter::Half);
    CHECK(fm.n_frames == 9);
    CHECK(fm.dim == 256);
    CHECK(fm.at(1, 255) == doctest::Approx(std::log(spec.at(1, 256) + 1e-10)));
  }
  SUBCASE("quarter partition reconstructs bins 1..512") {
    const FeatureMatrix q1 = qse(spec, Quarter::Q1);
    const FeatureMatrix q2 = qse(spec, Quarter::Q2);
    const FeatureMatrix q3 = qse(spec, Quarter::Q3);
    const FeatureMatrix q4 = qse(spec, Quarter::Q4);
    for (int n = 0; n < spec.n_frames; ++n) {
      for (int k = 1; k <= 512; ++k) {
        const FeatureMatrix& src = k <= 128 ? q1 : k <= 256 ? q2 : k <= 384 ? q3 : q4;
        const int idx = (k - 1) % 128;
        CHECK(src.at(n, idx) == doctest::Approx(std::log(spec.at(n, k) + 1e-10)).epsilon(1e-6));
      }
    }
  }
  SUBCASE("wrong K rejected") {
    AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples.assign(512, 0.25);
    FramingConfig small;
    small.frame_size = 512;
    small.hop = 64;
    const Spectrogram s = spectrogram(clip, small);
    CHECK_THROWS_AS(qse(s, Quarter::Q1), ShapeError);
  }
}

TEST_CASE("mel filterbank structure") {
  for (int rate : {16000, 44100}) {
    CAPTURE(rate);
    const auto bank = mel_filterbank(64, 1024, rate);
    REQUIRE(bank.size() == 64u * 513u);

    // every row peaks at exactly 1
    for (int m = 0; m < 64; ++m) {
      double row_max = 0.0;
      for (int k = 0; k < 513; ++k) row_max = std::max(row_max, bank[m * 513 + k]);
      CHECK(row_max == 1.0);
    }

    // full coverage between the first and last filter peaks
    int first_peak = 513, last_peak = -1;
    for (int k = 0; k < 513; ++k) {
      if (bank[0 * 513 + k] == 1.0) first_peak = std::min(first_peak, k);
      if (bank[63 * 513 + k] == 1.0) last_peak = std::max(last_peak, k);
    }
    for (int k = first_peak; k <= last_peak; ++k) {
      double col = 0.0;
      for (int m = 0; m < 64; ++m) col = std::max(col, bank[m * 513 + k]);
      CHECK(col > 0.0);
    }

    // centers increase monotonically in frequency
    int prev_center = -1;
    for (int m = 0; m < 64; ++m) {
      double best = 0.0;
      int center = 0;
      for (int k = 0; k < 513; ++k)
        if (bank[m * 513 + k] > best) {
          best = bank[m * 513 + k];
          center = k;
        }
      CHECK(center > prev_center);
      prev_center = center;
    }
  }
  CHECK_THROWS_AS(mel_filterbank(1, 1024, 16000), ConfigError);
  CHECK_THROWS_AS(mel_filterbank(600, 1024, 16000), ConfigError);
}

TEST_CASE("lfbe of silence is the log floor") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(1024, 0.0);
  const FeatureMatrix fm = lfbe(spectrogram(clip, {}));
  CHECK(fm.dim == 64);
  for (float v : fm.values) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("lfbe of an on-bin tone is dominated by the covering filter") {
  AudioClip clip = testutil::make_tone(1000.0, 16000, 2048, 0.5);
  const Spectrogram spec = spectrogram(clip, {});
  const FeatureMatrix fm = lfbe(spec);
  CHECK(fm.dim == 64);

  const auto bank = mel_filterbank(64, 1024, 16000);
  const int tone_bin = 64;  // 1 kHz at 15.625 Hz/bin
  int argmax = 0;
  for (int m = 1; m < 64; ++m)
    if (fm.at(0, m) > fm.at(0, argmax)) argmax = m;
  CHECK(bank[static_cast<std::size_t>(argmax) * 513 + tone_bin] > 0.0);
}

TEST_CASE("mfcc basics") {
  SUBCASE("dct of a constant vector") {
    std::vector<double> x(64, 3.25);
    const auto coeffs = dct2_orthonormal(x);
    CHECK(coeffs[0] == doctest::Approx(3.25 * std::sqrt(64.0)).epsilon(1e-12));
    for (std::size_t j = 1; j < coeffs.size(); ++j) CHECK(std::abs(coeffs[j]) < 1e-9);
  }
  SUBCASE("dct matches the direct-sum oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> x(64);
      for (auto& v : x) v = rng.uniform(-10.0, 10.0);
      const auto fast = dct2_orthonormal(x);
      const auto direct = testutil::direct_dct2(x);
      for (std::size_t j = 0; j < x.size(); ++j) CHECK(std::abs(fast[j] - direct[j]) < 1e-9);
    }
  }
  SUBCASE("mfcc dimension and config guard") {
    const Spectrogram spec = random_spectrogram(5, 21);
    const FeatureMatrix fm = mfcc(spec);
    CHECK(fm.n_frames == 5);
    CHECK(fm.dim == 64);
    CHECK(fm.kind == FeatureKind::Mfcc);
    CHECK_THROWS_AS(mfcc(spec, 64, 65), ConfigError);
  }
  SUBCASE("mfcc equals dct of lfbe rows") {
    const Spectrogram spec = random_spectrogram(3, 33);
    const FeatureMatrix lf = lfbe(spec);
    const FeatureMatrix mf = mfcc(spec);
    for (int n = 0; n < 3; ++n) {
      std::vector<double> row(64);
      for (int d = 0; d < 64; ++d) row[d] = lf.at(n, d);
      const auto oracle = testutil::direct_dct2(row);
      // float32 storage of both matrices limits agreement, not the math
      for (int d = 0; d < 64; ++d)
        CHECK(mf.at(n, d) == doctest::Approx(oracle[d]).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("q1 comb: voiced features carry the harmonic spacing, whispered do not") {
  // paired clips with a forced constant F0; the Q1 envelope of the voiced
  // frame must have autocorrelation peaks at the harmonic spacing, the
  // paired whisper frame must not
  SynthConfig scfg;
  scfg.duration_s = 1.0;
  scfg.silence_pad_s = 0.1;
  scfg.sample_rate = 16000;
  scfg.f0_min = 160.0;
  scfg.f0_max = 160.0;
  scfg.seed = 99;

  const int lag = static_cast<int>(std::lround(160.0 / (16000.0 / 1024.0)));  // ~10 bins

  auto comb_strength = [&](Label label, std::uint64_t idx) {
    const AudioClip clip = synth_utterance(scfg, label, idx);
    const Spectrogram spec = spectrogram(clip, {});
    const FeatureMatrix fm = qse(spec, Quarter::Q1);
    const int mid = fm.n_frames / 2;
    // detrend with a moving average so smooth formant structure drops out
    // and only comb-scale periodicity remains
    std::vector<double> v(fm.dim);
    for (int d = 0; d < fm.dim; ++d) {
      double avg = 0.0;
      int cnt = 0;
      for (int j = std::max(0, d - 5); j <= std::min(fm.dim - 1, d + 5); ++j, ++cnt)
        avg += fm.at(mid, j);
      v[d] = fm.at(mid, d) - avg / cnt;
    }
    double r0 = 0.0, rlag = 0.0;
    for (int d = 0; d < fm.dim; ++d) {
      r0 += v[d] * v[d];
      if (d + lag < fm.dim) rlag += v[d] * v[d + lag];
    }
    return rlag / r0;
  };

  for (std::uint64_t idx : {0ull, 1ull, 2ull, 3ull}) {
    CAPTURE(idx);
    const double voiced = comb_strength(Label::Normal, idx);
    const double whispered = comb_strength(Label::Whisper, idx);
    CHECK(voiced > 0.3);
    CHECK(whispered < voiced - 0.2);
  }
}

TEST_CASE("normalization statistics") {
  Rng rng(77);
  std::vector<FeatureMatrix> feats;
  for (int u = 0; u < 4; ++u) {
    FeatureMatrix fm;
    fm.kind = FeatureKind::Lfbe;
    fm.n_frames = 20;
    fm.dim = 8;
    fm.values.resize(20 * 8);
    for (auto& v : fm.values) v = static_cast<float>(rng.uniform(-3.0, 7.0));
    feats.push_back(fm);
  }

  const NormStats stats = fit_norm_stats(feats);
  REQUIRE(stats.mean.size() == 8);

  SUBCASE("standardization identity on the fitting data") {
    std::vector<double> sum(8, 0.0), sumsq(8, 0.0);
    std::size_t n = 0;
    for (const auto& fm : feats) {
      const FeatureMatrix z = apply_norm(fm, stats);
      for (int i = 0; i < z.n_frames; ++i)
        for (int d = 0; d < 8; ++d) {
          sum[d] += z.at(i, d);
          sumsq[d] += static_cast<double>(z.at(i, d)) * z.at(i, d);
        }
      n += z.n_frames;
    }
    for (int d = 0; d < 8; ++d) {
      CHECK(std::abs(sum[d] / n) < 1e-6);
      CHECK(std::sqrt(sumsq[d] / n) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  SUBCASE("constant dimension floored") {
    for (auto& fm : feats)
      for (int i = 0; i < fm.n_frames; ++i) fm.row(i)[3] = 2.5f;
    const NormStats s2 = fit_norm_stats(feats);
    CHECK(s2.stddev[3] == doctest::Approx(1e-8));
    const FeatureMatrix z = apply_norm(feats[0], s2);
    for (float v : z.values) CHECK(std::isfinite(v));
  }
  SUBCASE("shifting input shifts normalized output (train stats, not refit)") {
    FeatureMatrix shifted = feats[0];
    for (auto& v : shifted.values) v += 1.0f;
    const FeatureMatrix a = apply_norm(feats[0], stats);
    const FeatureMatrix b = apply_norm(shifted, stats);
    // if the stats had been (wrongly) refit on the shifted data, a and b
    // would be identical; with fixed train stats the shift must propagate
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(b.values[i] > a.values[i]);
  }
  SUBCASE("dimension mismatch") {
    FeatureMatrix small;
    small.n_frames = 1;
    small.dim = 4;
    small.values.assign(4, 0.0f);
    CHECK_THROWS_AS(apply_norm(small, stats), ShapeError);
  }
}

TEST_CASE("feature file round-trip") {
  testutil::TempDir dir("qsef");
  const Spectrogram spec = random_spectrogram(7, 99);
  const FeatureMatrix fm = qse(spec, Quarter::Q2);
  const auto path = dir.path() / "x.qsef";
  save_features(fm, path);
  const FeatureMatrix back = load_features(path);
  CHECK(back.kind == FeatureKind::QseQ2);
  CHECK(back.n_frames == fm.n_frames);
  CHECK(back.dim == fm.dim);
  CHECK(back.values == fm.values);

  SUBCASE("corrupt magic rejected") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(load_features(path), FormatError);
  }
}

TEST_CASE("norm stats json round-trip") {
  NormStats stats;
  stats.mean = {1.0, -2.5, 3.25};
  stats.stddev = {0.5, 1.5, 2.0};
  const NormStats back = norm_stats_from_json(norm_stats_to_json(stats));
  CHECK(back.mean == stats.mean);
  CHECK(back.stddev == stats.stddev);
  CHECK(back.fitted_on == "train");
}
