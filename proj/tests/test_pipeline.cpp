#include <doctest.h>

#include <cmath>
#include <fstream>

#include "testutil.hpp"
#include "whisperline/error.hpp"
#include "whisperline/pipeline.hpp"
#include "whisperline/synth.hpp"

using namespace whisperline;

namespace {

// small fast corpus shared by the trainer tests
const Manifest& tiny_corpus() {
  static testutil::TempDir dir("pipe_corpus");
  static Manifest manifest = [] {
    SynthConfig cfg;
    cfg.n_per_class = 10;
    cfg.duration_s = 0.3;
    cfg.silence_pad_s = 0.05;
    cfg.sample_rate = 16000;
    cfg.seed = 21;
    return generate_corpus(cfg, dir.path());
  }();
  return manifest;
}

std::vector<UtteranceFeatures> tiny_features(FeatureKind kind = FeatureKind::QseQ1) {
  FeatureConfig cfg;
  cfg.kind = kind;
  return extract_manifest(tiny_corpus(), cfg, 1);
}

TrainConfig fast_train(int epochs = 3) {
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = epochs;
  cfg.patience = epochs;
  return cfg;
}

}  // namespace

TEST_CASE("identical seeds give identical logs and parameters") {
  const auto features = tiny_features();
  const TrainConfig cfg = fast_train();
  FitResult a = fit(features, "arch1", cfg);
  FitResult b = fit(features, "arch1", cfg);

  CHECK(a.log.to_csv() == b.log.to_csv());
  const auto blocks_a = a.checkpoint.net.param_blocks();
  const auto blocks_b = b.checkpoint.net.param_blocks();
  REQUIRE(blocks_a.size() == blocks_b.size());
  for (std::size_t i = 0; i < blocks_a.size(); ++i) {
    REQUIRE(blocks_a[i].second == blocks_b[i].second);
    CHECK(std::equal(blocks_a[i].first, blocks_a[i].first + blocks_a[i].second,
                     blocks_b[i].first));
  }

  TrainConfig other = cfg;
  other.seed = 6;
  FitResult c = fit(features, "arch1", other);
  CHECK(a.log.to_csv() != c.log.to_csv());
}

TEST_CASE("initial loss on balanced data is ln 2") {
  const auto features = tiny_features();
  FitResult r = fit(features, "arch1", fast_train(1));
  REQUIRE(!r.log.epochs.empty());
  CHECK(r.log.epochs[0].epoch == 0);
  CHECK(r.log.epochs[0].train_loss == doctest::Approx(std::log(2.0)).epsilon(0.01));
}

TEST_CASE("a small corpus is overfit to 100% train frame accuracy within 50 epochs") {
  const auto features = tiny_features();
  TrainConfig cfg = fast_train(50);
  cfg.patience = 50;   // run past the val plateau
  cfg.dropout = 0.0f;  // capacity check, not regularization
  FitResult r = fit(features, "arch1", cfg);

  double best_train_acc = 0.0;
  for (const auto& e : r.log.epochs) best_train_acc = std::max(best_train_acc, e.train_acc);
  CHECK(best_train_acc == 1.0);
}

TEST_CASE("training log csv shape") {
  const auto features = tiny_features();
  FitResult r = fit(features, "arch1", fast_train(2));
  const std::string csv = r.log.to_csv();
  CHECK(csv.rfind("epoch,train_loss,val_acc\n", 0) == 0);
  CHECK(csv.find("\n0,") != std::string::npos);
  CHECK(csv.find("\n1,") != std::string::npos);
}

TEST_CASE("early stopping returns the best-validation parameters") {
  const auto features = tiny_features();
  TrainConfig cfg = fast_train(12);
  cfg.patience = 3;
  FitResult r = fit(features, "arch1", cfg);

  double best = -1.0;
  for (const auto& e : r.log.epochs) best = std::max(best, e.val_acc);
  CHECK(r.log.best_val_acc == best);
  CHECK(r.checkpoint.metadata["best_epoch"] == r.log.best_epoch);
}

TEST_CASE("mutating test utterances leaves the training log bit-identical") {
  auto features = tiny_features();
  const TrainConfig cfg = fast_train();
  FitResult before = fit(features, "arch1", cfg);

  for (auto& uf : features)
    if (uf.split == Split::Test)
      for (auto& v : uf.features.values) v += 17.5f;

  FitResult after = fit(features, "arch1", cfg);
  CHECK(before.log.to_csv() == after.log.to_csv());

  // ... while the evaluation of the mutated test split changes
  const EvalReport r1 = evaluate(before.checkpoint, tiny_features(), Split::Test);
  const EvalReport r2 = evaluate(after.checkpoint, features, Split::Test);
  CHECK(r1.total() == r2.total());
}

TEST_CASE("degenerate training sets are rejected") {
  auto features = tiny_features();
  SUBCASE("single class") {
    for (auto& uf : features) uf.label = Label::Normal;
    CHECK_THROWS_AS(fit(features, "arch1", fast_train()), DataError);
  }
  SUBCASE("no train split") {
    for (auto& uf : features) uf.split = Split::Test;
    CHECK_THROWS_AS(fit(features, "arch1", fast_train()), DataError);
  }
  SUBCASE("inconsistent dimensions") {
    features[0].features.dim = 64;
    features[0].features.values.resize(
        static_cast<std::size_t>(features[0].features.n_frames) * 64);
    CHECK_THROWS_AS(fit(features, "arch1", fast_train()), ShapeError);
  }
}

TEST_CASE("evaluate rejects a dimension mismatch against the checkpoint") {
  const auto features = tiny_features();
  FitResult r = fit(features, "arch1", fast_train(1));
  const auto mfcc_features = tiny_features(FeatureKind::Mfcc);  // 64-dim
  CHECK_THROWS_AS(evaluate(r.checkpoint, mfcc_features, Split::Test), ShapeError);
}

TEST_CASE("silence filter drops low-energy frames and still trains") {
  const auto features = tiny_features();
  TrainConfig cfg = fast_train(1);
  cfg.silence_filter = true;
  cfg.silence_margin = 2.0;
  FitResult r = fit(features, "arch1", cfg);
  CHECK(std::isfinite(r.log.epochs[0].train_loss));
}

TEST_CASE("recurrent path trains and stays deterministic") {
  const auto features = tiny_features(FeatureKind::Lfbe);
  TrainConfig cfg = fast_train(3);
  cfg.batch_size = 4;
  FitResult a = fit(features, "lstm64x2", cfg);
  FitResult b = fit(features, "lstm64x2", cfg);
  CHECK(a.log.to_csv() == b.log.to_csv());
  CHECK(a.checkpoint.net.spec.name == "lstm64x2");
  CHECK(a.log.epochs[0].train_loss == doctest::Approx(std::log(2.0)).epsilon(0.01));
}

TEST_CASE("worker count does not change the numbers") {
  const auto features = tiny_features();
  TrainConfig one = fast_train(2);
  one.jobs = 1;
  TrainConfig four = one;
  four.jobs = 4;
  FitResult a = fit(features, "arch1", one);
  FitResult b = fit(features, "arch1", four);
  CHECK(a.log.to_csv() == b.log.to_csv());
  const auto blocks_a = a.checkpoint.net.param_blocks();
  const auto blocks_b = b.checkpoint.net.param_blocks();
  for (std::size_t i = 0; i < blocks_a.size(); ++i)
    CHECK(std::equal(blocks_a[i].first, blocks_a[i].first + blocks_a[i].second,
                     blocks_b[i].first));
}

TEST_CASE("parallel extraction matches the sequential order and bits") {
  FeatureConfig cfg;
  const auto seq = extract_manifest(tiny_corpus(), cfg, 1);
  const auto par = extract_manifest(tiny_corpus(), cfg, 4);
  REQUIRE(seq.size() == par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq[i].utterance_id == par[i].utterance_id);
    CHECK(seq[i].features.values == par[i].features.values);
  }
}

TEST_CASE("feature directory round-trip") {
  testutil::TempDir dir("feature_dir");
  FeatureConfig cfg;
  cfg.kind = FeatureKind::QseQ2;
  const auto features = extract_manifest(tiny_corpus(), cfg, 1);
  save_feature_dir(features, cfg, dir.path());

  auto [back, back_cfg] = load_feature_dir(dir.path());
  CHECK(back_cfg.kind == FeatureKind::QseQ2);
  CHECK(back_cfg.target_rate == 16000);
  REQUIRE(back.size() == features.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].utterance_id == features[i].utterance_id);
    CHECK(back[i].label == features[i].label);
    CHECK(back[i].split == features[i].split);
    CHECK(back[i].features.values == features[i].features.values);
  }
}

TEST_CASE("preset catalogue covers every experiment") {
  const auto& presets = all_presets();
  CHECK(presets.size() == 29);

  auto has = [&](const std::string& name) {
    for (const auto& p : presets)
      if (p.name == name) return true;
    return false;
  };
  for (int n = 1; n <= 6; ++n) {
    CHECK(has("table2_arch" + std::to_string(n) + "_16k"));
    CHECK(has("table2_arch" + std::to_string(n) + "_44k"));
    CHECK(has("table4_arch" + std::to_string(n)));
  }
  for (int q = 1; q <= 4; ++q) CHECK(has("table5_q" + std::to_string(q)));
  CHECK(has("table6_lfbe"));
  CHECK(has("table6_mfcc"));
  CHECK(has("table6_qse"));
  CHECK(has("table7_snr0"));
  CHECK(has("table7_snr5"));
  CHECK(has("table7_snr10"));
  CHECK(has("half_envelope"));

  CHECK_THROWS_AS(preset_by_name("table9_bogus"), ConfigError);

  const ExperimentPreset t7 = preset_by_name("table7_snr5");
  CHECK(t7.snr_db == 5.0);
  CHECK(t7.model == "arch4");
  const ExperimentPreset t2 = preset_by_name("table2_arch3_44k");
  CHECK(t2.feature.target_rate == 44100);
}

TEST_CASE("run_preset writes the full artifact set") {
  testutil::TempDir dir("preset_out");
  TrainConfig cfg = fast_train(2);
  const EvalReport report =
      run_preset(preset_by_name("table5_q1"), tiny_corpus(), dir.path(), cfg);
  CHECK(report.total() == 4);
  CHECK(std::filesystem::exists(dir.path() / "report.csv"));
  CHECK(std::filesystem::exists(dir.path() / "report.json"));
  CHECK(std::filesystem::exists(dir.path() / "model.ckpt"));
  CHECK(std::filesystem::exists(dir.path() / "training_log.csv"));
  CHECK(std::filesystem::exists(dir.path() / "preset_config.json"));
  CHECK(!std::filesystem::exists(dir.path() / "snr_audit.csv"));

  const Checkpoint ckpt = load_checkpoint(dir.path() / "model.ckpt");
  CHECK(ckpt.metadata["preset"] == "table5_q1");
}

TEST_CASE("noise presets audit the injected snr on train and test") {
  testutil::TempDir dir("preset_noise");
  TrainConfig cfg = fast_train(2);
  run_preset(preset_by_name("table7_snr5"), tiny_corpus(), dir.path(), cfg);
  REQUIRE(std::filesystem::exists(dir.path() / "snr_audit.csv"));

  std::ifstream audit(dir.path() / "snr_audit.csv");
  std::string line;
  std::getline(audit, line);
  CHECK(line == "utterance_id,target_snr_db,measured_snr_db");
  std::size_t rows = 0;
  while (std::getline(audit, line)) {
    if (line.empty()) continue;
    ++rows;
    const auto second_comma = line.find(',', line.find(',') + 1);
    const double measured = std::stod(line.substr(second_comma + 1));
    CHECK(std::abs(measured - 5.0) <= 0.1);
  }
  CHECK(rows == tiny_corpus().entries.size());  // both splits audited
}
