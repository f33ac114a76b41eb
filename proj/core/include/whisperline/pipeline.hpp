#ifndef WHISPERLINE_PIPELINE_HPP
#define WHISPERLINE_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "whisperline/audio_io.hpp"
#include "whisperline/dsp.hpp"
#include "whisperline/eval.hpp"
#include "whisperline/models.hpp"

namespace whisperline {

struct TrainConfig {
  int batch_size = 128;   // frames (CNN) or sequences (LSTM) per step
  int max_epochs = 50;
  float lr = 1e-3f;
  float dropout = 0.5f;
  double val_fraction = 0.1;  // utterance-level, stratified
  int patience = 5;           // epochs without a val-accuracy improvement
  std::uint64_t seed = 0;
  int jobs = 1;  // worker threads; gradient reduction order is fixed, so
                 // results do not depend on this
  bool silence_filter = false;  // optional low-energy frame drop (train only)
  double silence_margin = 4.6;  // log-amplitude distance below utterance max

  void validate() const;
};

// What to compute from a clip. A 44.1 kHz clip is resampled first when the
// target rate is 16000; noise injection (presets, `noise` command) happens
// before resampling.
struct FeatureConfig {
  FeatureKind kind = FeatureKind::QseQ1;
  int target_rate = 16000;
  FramingConfig framing;
};

std::string feature_config_to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const std::string& json_text);

struct UtteranceFeatures {
  std::string utterance_id;
  Label label = Label::Unlabeled;
  Split split = Split::Train;
  FeatureMatrix features;
};

FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg);

// Extracts every manifest entry (optionally with white noise at snr_db,
// seeded per utterance) using up to `jobs` threads. Entries keep manifest
// order. snr_audit, when non-null, receives (utterance_id, measured SNR).
std::vector<UtteranceFeatures> extract_manifest(
    const Manifest& manifest, const FeatureConfig& cfg, int jobs,
    std::optional<double> snr_db = std::nullopt, std::uint64_t noise_seed = 0,
    std::vector<std::pair<std::string, double>>* snr_audit = nullptr);

// On-disk feature directory produced by `extract`: one .qsef per utterance,
// features_manifest.csv and extract_config.json.
void save_feature_dir(const std::vector<UtteranceFeatures>& features, const FeatureConfig& cfg,
                      const std::filesystem::path& dir);
std::pair<std::vector<UtteranceFeatures>, FeatureConfig> load_feature_dir(
    const std::filesystem::path& dir);

struct EpochLog {
  int epoch = 0;  // 0 is the pre-training evaluation
  double train_loss = 0.0;
  double val_acc = 0.0;
  double train_acc = 0.0;  // frame-level, measured during the epoch
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;

  std::string to_csv() const;
};

struct FitResult {
  Checkpoint checkpoint;
  TrainLog log;
};

// Frame-level training with utterance-level early stopping. Normalization
// statistics are fitted on the training portion only and stored in the
// checkpoint; validation utterances are carved out of the train split per
// class. Deterministic in (features order, model, cfg.seed).
FitResult fit(const std::vector<UtteranceFeatures>& features, const std::string& model_name,
              const TrainConfig& cfg, const FeatureConfig& feature_cfg = {});

// Applies the checkpoint's normalization, runs the network per utterance and
// reduces frame posteriors to utterance decisions over the chosen split.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<UtteranceFeatures>& features,
                    Split split, std::vector<UtterancePosterior>* posteriors = nullptr);

// A named, fully specified experiment: feature, architecture, optional
// matched noise condition.
struct ExperimentPreset {
  std::string name;
  FeatureConfig feature;
  std::string model;
  std::optional<double> snr_db;  // matched train/test white noise
};

const std::vector<ExperimentPreset>& all_presets();
ExperimentPreset preset_by_name(const std::string& name);

// Runs extraction (+noise per preset), fit, and test evaluation; writes
// report.csv/.json, checkpoint.ckpt, training_log.csv, preset_config.json
// and, for noise presets, snr_audit.csv into out_dir.
EvalReport run_preset(const ExperimentPreset& preset, const Manifest& manifest,
                      const std::filesystem::path& out_dir, const TrainConfig& train_cfg);

}  // namespace whisperline

#endif  // WHISPERLINE_PIPELINE_HPP
