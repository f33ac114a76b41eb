#include "whisperline/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "whisperline/error.hpp"
#include "whisperline/pipeline.hpp"
#include "whisperline/rng.hpp"
#include "whisperline/synth.hpp"

namespace whisperline {

namespace {

std::uint64_t env_default_seed() {
  if (const char* env = std::getenv("WHISPERLINE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("WHISPERLINE_SEED is not an integer");
    }
  }
  return 0;
}

FeatureKind parse_feature(const std::string& feature, const std::string& quarter) {
  if (feature == "mfcc" || feature == "lfbe") {
    if (!quarter.empty())
      throw CLI::ValidationError("--quarter", "only valid with --feature qse");
    return feature == "mfcc" ? FeatureKind::Mfcc : FeatureKind::Lfbe;
  }
  if (feature == "qse") {
    const std::string q = quarter.empty() ? "q1" : quarter;
    if (q == "q1") return FeatureKind::QseQ1;
    if (q == "q2") return FeatureKind::QseQ2;
    if (q == "q3") return FeatureKind::QseQ3;
    if (q == "q4") return FeatureKind::QseQ4;
    if (q == "half") return FeatureKind::QseHalf;
    throw CLI::ValidationError("--quarter", "must be q1|q2|q3|q4|half");
  }
  throw CLI::ValidationError("--feature", "must be qse|mfcc|lfbe");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"whisperline: whispered vs normal speech classification toolkit"};
  app.require_subcommand(1);

  // ------------------------------------------------------------- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic voiced/whisper corpus");
  std::string synth_out;
  SynthConfig synth_cfg;
  bool seed_given = false;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n", synth_cfg.n_per_class, "utterances per class")->required();
  synth_cmd->add_option("--seed", synth_cfg.seed, "corpus seed (default from WHISPERLINE_SEED)")
      ->each([&](const std::string&) { seed_given = true; });
  synth_cmd->add_option("--duration", synth_cfg.duration_s, "utterance duration in seconds")
      ->capture_default_str();
  synth_cmd->add_option("--rate", synth_cfg.sample_rate, "sample rate (16000 or 44100)")
      ->capture_default_str();
  synth_cmd->add_option("--pad", synth_cfg.silence_pad_s, "leading/trailing silence in seconds")
      ->capture_default_str();
  synth_cmd->add_option("--test-fraction", synth_cfg.test_fraction, "test split fraction")
      ->capture_default_str();

  // ----------------------------------------------------------- extract ----
  auto* extract_cmd = app.add_subcommand("extract", "compute features for a corpus manifest");
  std::string ex_manifest, ex_feature, ex_quarter, ex_out;
  int ex_rate = 16000;
  int ex_jobs = 1;
  extract_cmd->add_option("--manifest", ex_manifest, "corpus manifest csv")->required();
  extract_cmd->add_option("--feature", ex_feature, "qse|mfcc|lfbe")->required();
  extract_cmd->add_option("--quarter", ex_quarter, "qse quarter: q1|q2|q3|q4|half (default q1)");
  extract_cmd->add_option("--rate", ex_rate, "analysis sample rate (16000 or 44100)")
      ->capture_default_str();
  extract_cmd->add_option("--out", ex_out, "output feature directory")->required();
  extract_cmd->add_option("--jobs", ex_jobs, "extraction worker threads")->capture_default_str();

  // ------------------------------------------------------------- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model on extracted features");
  std::string tr_features, tr_arch, tr_out;
  TrainConfig tr_cfg;
  bool tr_seed_given = false;
  bool tr_force = false;
  train_cmd->add_option("--features", tr_features, "feature directory from `extract`")->required();
  train_cmd->add_option("--arch", tr_arch, "arch1..arch6 | lstm64x2")->required();
  train_cmd->add_option("--seed", tr_cfg.seed, "training seed (default from WHISPERLINE_SEED)")
      ->each([&](const std::string&) { tr_seed_given = true; });
  train_cmd->add_option("--out", tr_out, "checkpoint output path")->required();
  train_cmd->add_option("--lr", tr_cfg.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tr_cfg.batch_size, "mini-batch size")->capture_default_str();
  train_cmd->add_option("--epochs", tr_cfg.max_epochs, "maximum epochs")->capture_default_str();
  train_cmd->add_option("--dropout", tr_cfg.dropout, "dropout rate")->capture_default_str();
  train_cmd->add_option("--val-fraction", tr_cfg.val_fraction, "validation utterance fraction")
      ->capture_default_str();
  train_cmd->add_option("--patience", tr_cfg.patience, "early stopping patience (epochs)")
      ->capture_default_str();
  train_cmd->add_option("--jobs", tr_cfg.jobs, "gradient worker threads")->capture_default_str();
  train_cmd->add_flag("--silence-filter", tr_cfg.silence_filter,
                      "drop low-energy training frames");
  train_cmd->add_flag("--force", tr_force, "overwrite an existing checkpoint");

  // -------------------------------------------------------------- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_features, ev_report;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--features", ev_features, "feature directory from `extract`")->required();
  eval_cmd->add_option("--report", ev_report, "report csv output path")->required();

  // ------------------------------------------------------------- noise ----
  auto* noise_cmd = app.add_subcommand("noise", "write a white-noise-injected copy of a corpus");
  std::string no_manifest, no_out;
  double no_snr = 0.0;
  std::uint64_t no_seed = 0;
  bool no_seed_given = false;
  noise_cmd->add_option("--manifest", no_manifest, "corpus manifest csv")->required();
  noise_cmd->add_option("--snr", no_snr, "target SNR in dB")->required();
  noise_cmd->add_option("--seed", no_seed, "noise seed (default from WHISPERLINE_SEED)")
      ->each([&](const std::string&) { no_seed_given = true; });
  noise_cmd->add_option("--out", no_out, "output directory")->required();

  // ----------------------------------------------------------- inspect ----
  auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint's architecture and costs");
  std::string in_ckpt;
  inspect_cmd->add_option("--ckpt", in_ckpt, "checkpoint path")->required();

  // ------------------------------------------------------------ preset ----
  auto* preset_cmd = app.add_subcommand("preset", "run a named experiment preset");
  std::string pr_name, pr_manifest, pr_out;
  TrainConfig pr_cfg;
  bool pr_seed_given = false;
  bool pr_list = false;
  preset_cmd->add_option("--name", pr_name, "preset name (see --list)");
  preset_cmd->add_option("--manifest", pr_manifest, "corpus manifest csv");
  preset_cmd->add_option("--out", pr_out, "output directory");
  preset_cmd->add_option("--seed", pr_cfg.seed, "seed (default from WHISPERLINE_SEED)")
      ->each([&](const std::string&) { pr_seed_given = true; });
  preset_cmd->add_option("--epochs", pr_cfg.max_epochs, "maximum epochs")->capture_default_str();
  preset_cmd->add_option("--batch", pr_cfg.batch_size, "mini-batch size")->capture_default_str();
  preset_cmd->add_option("--patience", pr_cfg.patience, "early stopping patience")
      ->capture_default_str();
  preset_cmd->add_option("--jobs", pr_cfg.jobs, "worker threads")->capture_default_str();
  preset_cmd->add_flag("--list", pr_list, "list available presets");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*synth_cmd) {
      if (!seed_given) synth_cfg.seed = env_default_seed();
      const Manifest manifest = generate_corpus(synth_cfg, synth_out);
      out << "wrote " << manifest.entries.size() << " utterances (" << manifest.count(Split::Train)
          << " train, " << manifest.count(Split::Test) << " test) to " << synth_out << '\n';
    } else if (*extract_cmd) {
      FeatureConfig cfg;
      cfg.kind = parse_feature(ex_feature, ex_quarter);
      cfg.target_rate = ex_rate;
      if (ex_rate != 16000 && ex_rate != 44100)
        throw CLI::ValidationError("--rate", "must be 16000 or 44100");
      const Manifest manifest = load_manifest(ex_manifest);
      const auto features = extract_manifest(manifest, cfg, ex_jobs);
      save_feature_dir(features, cfg, ex_out);
      out << "extracted " << to_string(cfg.kind) << " features for " << features.size()
          << " utterances to " << ex_out << '\n';
    } else if (*train_cmd) {
      if (!tr_seed_given) tr_cfg.seed = env_default_seed();
      if (std::filesystem::exists(tr_out) && !tr_force)
        throw DataError("refusing to overwrite existing checkpoint " + tr_out +
                        " (pass --force)");
      auto [features, feature_cfg] = load_feature_dir(tr_features);
      FitResult result = fit(features, tr_arch, tr_cfg, feature_cfg);
      save_checkpoint(result.checkpoint, tr_out);
      std::ofstream log_os(tr_out + ".log.csv", std::ios::trunc);
      log_os << result.log.to_csv();
      std::ofstream cfg_os(tr_out + ".config.json", std::ios::trunc);
      nlohmann::json echo;
      echo["arch"] = tr_arch;
      echo["feature"] = nlohmann::json::parse(feature_config_to_json(feature_cfg));
      echo["train"] = {{"batch_size", tr_cfg.batch_size},
                       {"max_epochs", tr_cfg.max_epochs},
                       {"lr", tr_cfg.lr},
                       {"dropout", tr_cfg.dropout},
                       {"val_fraction", tr_cfg.val_fraction},
                       {"patience", tr_cfg.patience},
                       {"seed", tr_cfg.seed}};
      cfg_os << echo.dump(2) << '\n';
      out << "trained " << tr_arch << ": best val acc "
          << result.log.best_val_acc * 100.0 << "% at epoch " << result.log.best_epoch
          << "; checkpoint " << tr_out << '\n';
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(ev_ckpt);
      auto [features, feature_cfg] = load_feature_dir(ev_features);
      const std::string ckpt_feature = ckpt.metadata.value("feature", std::string());
      if (!ckpt_feature.empty() && ckpt_feature != to_string(feature_cfg.kind))
        throw DataError("checkpoint was trained on " + ckpt_feature + " but features are " +
                        to_string(feature_cfg.kind));
      const EvalReport report = evaluate(ckpt, features, Split::Test);
      save_report(report, ev_report);
      out << report_to_csv(report);
    } else if (*noise_cmd) {
      if (!no_seed_given) no_seed = env_default_seed();
      const Manifest manifest = load_manifest(no_manifest);
      std::filesystem::create_directories(no_out);
      Manifest noisy_manifest;
      std::ofstream audit(std::filesystem::path(no_out) / "snr_audit.csv", std::ios::trunc);
      audit << "utterance_id,target_snr_db,measured_snr_db\n";
      for (const auto& e : manifest.entries) {
        AudioClip clip = read_wav(e.path);
        clip.utterance_id = e.utterance_id;
        clip.label = e.label;
        const AudioClip noisy =
            add_white_noise(clip, no_snr, mix64(no_seed, hash_str(e.utterance_id)));
        const auto file = std::filesystem::path(no_out) / (e.utterance_id + ".wav");
        write_wav(noisy, file);
        audit << e.utterance_id << ',' << no_snr << ',' << measure_snr(clip, noisy) << '\n';
        noisy_manifest.entries.push_back({e.utterance_id, file, e.label, e.split});
      }
      save_manifest(noisy_manifest, std::filesystem::path(no_out) / "manifest.csv");
      out << "wrote " << noisy_manifest.entries.size() << " noisy utterances at " << no_snr
          << " dB SNR to " << no_out << '\n';
    } else if (*inspect_cmd) {
      const Checkpoint ckpt = load_checkpoint(in_ckpt);
      out << describe(ckpt.net.spec);
      if (!ckpt.metadata.empty()) out << "metadata: " << ckpt.metadata.dump() << '\n';
    } else if (*preset_cmd) {
      if (pr_list) {
        for (const auto& p : all_presets()) out << p.name << '\n';
        return 0;
      }
      if (pr_name.empty() || pr_manifest.empty() || pr_out.empty())
        throw CLI::RequiredError("--name, --manifest and --out");
      if (!pr_seed_given) pr_cfg.seed = env_default_seed();
      const ExperimentPreset preset = preset_by_name(pr_name);
      const Manifest manifest = load_manifest(pr_manifest);
      const EvalReport report = run_preset(preset, manifest, pr_out, pr_cfg);
      out << report_to_csv(report);
    }
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace whisperline
