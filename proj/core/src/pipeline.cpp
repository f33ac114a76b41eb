#include "whisperline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "whisperline/error.hpp"
#include "whisperline/rng.hpp"

namespace whisperline {

namespace {

constexpr int kGradShards = 16;

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 0.5))
    throw ConfigError("val_fraction must be in (0, 0.5)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError("dropout must be in [0, 1)");
}

std::string feature_config_to_json(const FeatureConfig& cfg) {
  nlohmann::json j;
  j["feature"] = to_string(cfg.kind);
  j["target_rate"] = cfg.target_rate;
  j["framing"]["frame_size"] = cfg.framing.frame_size;
  j["framing"]["hop"] = cfg.framing.hop;
  j["framing"]["window"] = to_string(cfg.framing.window);
  return j.dump(2);
}

FeatureConfig feature_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  FeatureConfig cfg;
  cfg.kind = feature_kind_from_string(j.at("feature").get<std::string>());
  cfg.target_rate = j.at("target_rate").get<int>();
  if (j.contains("framing")) {
    cfg.framing.frame_size = j["framing"].value("frame_size", 1024);
    cfg.framing.hop = j["framing"].value("hop", 128);
    cfg.framing.window = window_from_string(j["framing"].value("window", std::string("hann")));
  }
  return cfg;
}

FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg) {
  const AudioClip* src = &clip;
  AudioClip resampled;
  if (clip.sample_rate != cfg.target_rate) {
    if (clip.sample_rate == 44100 && cfg.target_rate == 16000) {
      resampled = resample_44k_to_16k(clip);
      src = &resampled;
    } else {
      throw UnsupportedRate("cannot produce " + std::to_string(cfg.target_rate) + " Hz features from a " +
                            std::to_string(clip.sample_rate) + " Hz clip");
    }
  }
  const Spectrogram spec = spectrogram(*src, cfg.framing);
  switch (cfg.kind) {
    case FeatureKind::QseQ1:
      return qse(spec, Quarter::Q1);
    case FeatureKind::QseQ2:
      return qse(spec, Quarter::Q2);
    case FeatureKind::QseQ3:
      return qse(spec, Quarter::Q3);
    case FeatureKind::QseQ4:
      return qse(spec, Quarter::Q4);
    case FeatureKind::QseHalf:
      return qse(spec, Quarter::Half);
    case FeatureKind::Mfcc:
      return mfcc(spec);
    case FeatureKind::Lfbe:
      return lfbe(spec);
  }
  throw ConfigError("bad feature kind");
}

std::vector<UtteranceFeatures> extract_manifest(
    const Manifest& manifest, const FeatureConfig& cfg, int jobs, std::optional<double> snr_db,
    std::uint64_t noise_seed, std::vector<std::pair<std::string, double>>* snr_audit) {
  const std::size_t n = manifest.entries.size();
  std::vector<UtteranceFeatures> out(n);
  std::vector<double> measured(n, 0.0);
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t i = begin; i < end; ++i) {
        const ManifestEntry& e = manifest.entries[i];
        AudioClip clip = read_wav(e.path);
        clip.utterance_id = e.utterance_id;
        clip.label = e.label;
        if (snr_db.has_value()) {
          const AudioClip noisy =
              add_white_noise(clip, *snr_db, mix64(noise_seed, hash_str(e.utterance_id)));
          measured[i] = measure_snr(clip, noisy);
          clip = noisy;
        }
        out[i].utterance_id = e.utterance_id;
        out[i].label = e.label;
        out[i].split = e.split;
        out[i].features = extract_features(clip, cfg);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) threads.emplace_back(work, b, e);
    }
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  if (snr_audit && snr_db.has_value()) {
    snr_audit->clear();
    for (std::size_t i = 0; i < n; ++i)
      snr_audit->emplace_back(manifest.entries[i].utterance_id, measured[i]);
  }
  return out;
}

namespace {

std::string safe_filename(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return s;
}

}  // namespace

void save_feature_dir(const std::vector<UtteranceFeatures>& features, const FeatureConfig& cfg,
                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  Manifest manifest;
  for (const auto& uf : features) {
    const auto file = dir / (safe_filename(uf.utterance_id) + ".qsef");
    save_features(uf.features, file);
    manifest.entries.push_back({uf.utterance_id, file, uf.label, uf.split});
  }
  save_manifest(manifest, dir / "features_manifest.csv");
  std::ofstream os(dir / "extract_config.json", std::ios::trunc);
  os << feature_config_to_json(cfg) << '\n';
  if (!os) throw IoError("cannot write extract_config.json");
}

std::pair<std::vector<UtteranceFeatures>, FeatureConfig> load_feature_dir(
    const std::filesystem::path& dir) {
  std::ifstream cfg_in(dir / "extract_config.json");
  if (!cfg_in) throw IoError("missing extract_config.json in " + dir.string());
  std::stringstream ss;
  ss << cfg_in.rdbuf();
  const FeatureConfig cfg = feature_config_from_json(ss.str());

  const Manifest manifest = load_manifest(dir / "features_manifest.csv");
  std::vector<UtteranceFeatures> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    UtteranceFeatures uf;
    uf.utterance_id = e.utterance_id;
    uf.label = e.label;
    uf.split = e.split;
    uf.features = load_features(e.path);
    out.push_back(std::move(uf));
  }
  return {std::move(out), cfg};
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_acc\n" << std::fixed << std::setprecision(6);
  for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_acc << '\n';
  return os.str();
}

namespace {

// Evaluation-mode forward of one utterance; returns utterance decision.
UtterancePosterior utterance_decision(const Network& net, const FeatureMatrix& fm,
                                      const std::string& id, NetCache& cache) {
  std::vector<float> posteriors;
  net_forward(net, fm.values.data(), fm.n_frames, false, nullptr, cache, posteriors);
  return decide_utterance(posteriors, fm.n_frames, id);
}

struct LossAcc {
  double loss = 0.0;
  double acc = 0.0;
};

LossAcc mean_loss(const Network& net, const float* x, const int* labels, int rows,
                  NetCache& cache) {
  // chunked so the im2col scratch stays small on large frame sets
  const int chunk = 512;
  const int dim = net.spec.input_dim;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<float> posteriors;
  for (int start = 0; start < rows; start += chunk) {
    const int n = std::min(chunk, rows - start);
    net_forward(net, x + static_cast<std::size_t>(start) * dim, n, false, nullptr, cache,
                posteriors);
    for (int r = 0; r < n; ++r) {
      loss += nn::cross_entropy<float>(&posteriors[2 * r], 2, labels[start + r], nullptr, 1.0f);
      correct += (posteriors[2 * r + 1] > posteriors[2 * r] ? 1 : 0) == labels[start + r];
    }
  }
  return {loss / rows, static_cast<double>(correct) / rows};
}

struct SnapshotBuffer {
  std::vector<float> data;

  void capture(const Network& net) {
    data.clear();
    for (const auto& [p, c] : net.param_blocks()) data.insert(data.end(), p, p + c);
  }
  void restore(Network& net) const {
    std::size_t off = 0;
    for (auto& [p, c] : net.param_blocks()) {
      std::copy_n(data.begin() + off, c, p);
      off += c;
    }
  }
};

// Shared early-stopping / logging state across the two trainer paths.
struct EarlyStopper {
  SnapshotBuffer best;
  double best_acc = -1.0;
  int best_epoch = 0;
  int stale = 0;

  // returns true when training should stop
  bool observe(const Network& net, double val_acc, int epoch, int patience) {
    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_epoch = epoch;
      best.capture(net);
      stale = 0;
      return false;
    }
    return ++stale >= patience;
  }
};

}  // namespace

FitResult fit(const std::vector<UtteranceFeatures>& features, const std::string& model_name,
              const TrainConfig& cfg, const FeatureConfig& feature_cfg) {
  cfg.validate();

  std::vector<const UtteranceFeatures*> train_utts;
  for (const auto& uf : features)
    if (uf.split == Split::Train) train_utts.push_back(&uf);
  if (train_utts.empty()) throw DataError("no train-split utterances");

  const int dim = train_utts.front()->features.dim;
  const FeatureKind kind = train_utts.front()->features.kind;
  for (const auto* uf : train_utts)
    if (uf->features.dim != dim)
      throw ShapeError("inconsistent feature dimensions in the training set");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < train_utts.size(); ++i) {
    const Label l = train_utts[i]->label;
    if (l == Label::Unlabeled) throw DataError("training utterances must be labeled");
    by_class[static_cast<int>(l)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw DataError("train split must contain both classes");

  // utterance-level stratified validation carve-out
  std::vector<bool> is_val(train_utts.size(), false);
  for (int c = 0; c < 2; ++c) {
    Rng rng(mix64(mix64(cfg.seed, hash_str("val_split")), static_cast<std::uint64_t>(c)));
    auto ids = by_class[c];
    rng.shuffle(ids);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(cfg.val_fraction * ids.size()));
    n_val = std::min(n_val, ids.size() - 1);
    n_val = std::max<std::size_t>(n_val, ids.size() > 1 ? 1 : 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[ids[i]] = true;
  }

  std::vector<const UtteranceFeatures*> fit_utts, val_utts;
  for (std::size_t i = 0; i < train_utts.size(); ++i)
    (is_val[i] ? val_utts : fit_utts).push_back(train_utts[i]);
  if (fit_utts.empty() || val_utts.empty())
    throw DataError("validation carve-out left an empty fit or val set");

  std::vector<FeatureMatrix> fit_mats;
  fit_mats.reserve(fit_utts.size());
  for (const auto* uf : fit_utts) fit_mats.push_back(uf->features);
  const NormStats stats = fit_norm_stats(fit_mats);

  Network net = build(model_name, dim, cfg.seed, cfg.dropout);
  const bool recurrent = net.recurrent();

  // normalized per-utterance features for validation scoring
  struct ValUtt {
    FeatureMatrix fm;
    Label label;
    std::string id;
  };
  std::vector<ValUtt> val;
  for (const auto* uf : val_utts)
    val.push_back({apply_norm(uf->features, stats), uf->label, uf->utterance_id});

  NetCache eval_cache;
  auto val_accuracy = [&]() {
    int correct = 0;
    for (const auto& v : val) {
      const auto up = utterance_decision(net, v.fm, v.id, eval_cache);
      if (up.decision == v.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val.size());
  };

  TrainLog log;
  EarlyStopper stopper;
  AdamState adam;
  int epochs_trained = 0;

  const int jobs = cfg.jobs;
  std::vector<NetCache> worker_caches(std::max(1, jobs));

  if (!recurrent) {
    // frame-level dataset: every frame carries its utterance label
    std::vector<float> X;
    std::vector<int> y;
    for (const auto* uf : fit_utts) {
      FeatureMatrix fm = apply_norm(uf->features, stats);
      // optional low-energy frame drop (never applied at evaluation time)
      std::vector<bool> keep(fm.n_frames, true);
      if (cfg.silence_filter) {
        double max_proxy = -1e30;
        std::vector<double> proxy(fm.n_frames);
        for (int n = 0; n < fm.n_frames; ++n) {
          const float* raw = uf->features.row(n);
          double acc = 0.0;
          if (kind == FeatureKind::Mfcc) {
            acc = raw[0];
          } else {
            for (int d = 0; d < fm.dim; ++d) acc += raw[d];
            acc /= fm.dim;
          }
          proxy[n] = acc;
          max_proxy = std::max(max_proxy, acc);
        }
        for (int n = 0; n < fm.n_frames; ++n)
          keep[n] = proxy[n] >= max_proxy - cfg.silence_margin;
      }
      for (int n = 0; n < fm.n_frames; ++n) {
        if (!keep[n]) continue;
        X.insert(X.end(), fm.row(n), fm.row(n) + fm.dim);
        y.push_back(static_cast<int>(uf->label));
      }
    }
    const std::size_t n_frames = y.size();
    if (n_frames == 0) throw DataError("silence filter removed every training frame");

    const LossAcc init = mean_loss(net, X.data(), y.data(), static_cast<int>(n_frames), eval_cache);
    log.epochs.push_back({0, init.loss, val_accuracy(), init.acc});
    stopper.observe(net, log.epochs.back().val_acc, 0, cfg.patience);

    std::vector<std::size_t> order(n_frames);
    std::iota(order.begin(), order.end(), 0);

    std::vector<float> batch_x;
    std::vector<int> batch_y;
    std::vector<float> grads;
    std::vector<std::vector<float>> shard_grads;
    std::vector<double> shard_loss(kGradShards);
    std::vector<std::size_t> shard_correct(kGradShards);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      Rng shuffle_rng(mix64(mix64(cfg.seed, hash_str("shuffle")), static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);

      double epoch_loss = 0.0;
      std::size_t epoch_correct = 0;
      for (std::size_t start = 0; start < n_frames; start += cfg.batch_size) {
        const int bsz = static_cast<int>(std::min<std::size_t>(cfg.batch_size, n_frames - start));
        batch_x.resize(static_cast<std::size_t>(bsz) * dim);
        batch_y.resize(bsz);
        for (int i = 0; i < bsz; ++i) {
          const std::size_t src = order[start + i];
          std::copy_n(&X[src * dim], dim, &batch_x[static_cast<std::size_t>(i) * dim]);
          batch_y[i] = y[src];
        }

        const int n_shards = std::min(kGradShards, bsz);
        const int shard_size = (bsz + n_shards - 1) / n_shards;
        const std::uint64_t batch_tag =
            mix64(mix64(cfg.seed, hash_str("dropout")),
                  mix64(static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(start)));

        std::fill(shard_loss.begin(), shard_loss.end(), 0.0);
        std::fill(shard_correct.begin(), shard_correct.end(), 0);

        auto run_shard = [&](int s, NetCache& cache, std::vector<float>& grad_buf) {
          const int b0 = s * shard_size;
          const int b1 = std::min(bsz, b0 + shard_size);
          if (b0 >= b1) return;
          const int rows = b1 - b0;
          Rng dropout_rng(mix64(batch_tag, static_cast<std::uint64_t>(s)));
          std::vector<float> posteriors;
          net_forward(net, &batch_x[static_cast<std::size_t>(b0) * dim], rows, true, &dropout_rng,
                      cache, posteriors);
          std::vector<float> grad_out(static_cast<std::size_t>(rows) * 2);
          double loss = 0.0;
          std::size_t hits = 0;
          const float w = 1.0f / static_cast<float>(bsz);
          for (int r = 0; r < rows; ++r) {
            loss += nn::cross_entropy<float>(&posteriors[2 * r], 2, batch_y[b0 + r],
                                             &grad_out[2 * r], w);
            hits += (posteriors[2 * r + 1] > posteriors[2 * r] ? 1 : 0) == batch_y[b0 + r];
          }
          shard_loss[s] = loss;
          shard_correct[s] = hits;
          net_backward(net, grad_out.data(), rows, cache, grad_buf);
        };

        grads.assign(net.total_params(), 0.0f);
        if (jobs == 1) {
          for (int s = 0; s < n_shards; ++s) run_shard(s, worker_caches[0], grads);
        } else {
          shard_grads.assign(n_shards, {});
          std::vector<std::thread> threads;
          for (int w = 0; w < jobs; ++w) {
            threads.emplace_back([&, w]() {
              for (int s = w; s < n_shards; s += jobs)
                run_shard(s, worker_caches[w], shard_grads[s]);
            });
          }
          for (auto& t : threads) t.join();
          for (int s = 0; s < n_shards; ++s) {
            if (shard_grads[s].empty()) continue;
            for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += shard_grads[s][i];
          }
        }

        for (int s = 0; s < n_shards; ++s) {
          epoch_loss += shard_loss[s];
          epoch_correct += shard_correct[s];
        }
        adam_step(net, grads, adam, cfg.lr);
      }

      epochs_trained = epoch;
      const double acc = val_accuracy();
      log.epochs.push_back({epoch, epoch_loss / static_cast<double>(n_frames), acc,
                            static_cast<double>(epoch_correct) / static_cast<double>(n_frames)});
      if (stopper.observe(net, acc, epoch, cfg.patience)) break;
    }
  } else {
    // sequence-level dataset for the recurrent baseline
    struct Seq {
      FeatureMatrix fm;
      int label;
    };
    std::vector<Seq> seqs;
    double init_loss = 0.0;
    for (const auto* uf : fit_utts)
      seqs.push_back({apply_norm(uf->features, stats), static_cast<int>(uf->label)});

    double init_acc = 0.0;
    {
      std::vector<int> labels;
      for (const auto& s : seqs) {
        labels.assign(s.fm.n_frames, s.label);
        const LossAcc la =
            mean_loss(net, s.fm.values.data(), labels.data(), s.fm.n_frames, eval_cache);
        init_loss += la.loss;
        init_acc += la.acc;
      }
      init_loss /= static_cast<double>(seqs.size());
      init_acc /= static_cast<double>(seqs.size());
    }
    log.epochs.push_back({0, init_loss, val_accuracy(), init_acc});
    stopper.observe(net, log.epochs.back().val_acc, 0, cfg.patience);

    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> grads;
    std::vector<std::vector<float>> shard_grads;
    std::vector<double> shard_loss(kGradShards);
    std::vector<double> shard_acc(kGradShards);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      Rng shuffle_rng(mix64(mix64(cfg.seed, hash_str("shuffle")), static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);

      double epoch_loss = 0.0;
      double epoch_acc = 0.0;
      for (std::size_t start = 0; start < seqs.size(); start += cfg.batch_size) {
        const int bsz = static_cast<int>(std::min<std::size_t>(cfg.batch_size, seqs.size() - start));
        const int n_shards = std::min(kGradShards, bsz);
        const int shard_size = (bsz + n_shards - 1) / n_shards;
        const std::uint64_t batch_tag =
            mix64(mix64(cfg.seed, hash_str("dropout")),
                  mix64(static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(start)));
        std::fill(shard_loss.begin(), shard_loss.end(), 0.0);
        std::fill(shard_acc.begin(), shard_acc.end(), 0.0);

        auto run_shard = [&](int s, NetCache& cache, std::vector<float>& grad_buf) {
          const int b0 = s * shard_size;
          const int b1 = std::min(bsz, b0 + shard_size);
          if (b0 >= b1) return;
          Rng dropout_rng(mix64(batch_tag, static_cast<std::uint64_t>(s)));
          double loss_sum = 0.0;
          double acc_sum = 0.0;
          for (int b = b0; b < b1; ++b) {
            const Seq& seq = seqs[order[start + b]];
            const int rows = seq.fm.n_frames;
            std::vector<float> posteriors;
            net_forward(net, seq.fm.values.data(), rows, true, &dropout_rng, cache, posteriors);
            std::vector<float> grad_out(static_cast<std::size_t>(rows) * 2);
            double loss = 0.0;
            std::size_t hits = 0;
            const float w = 1.0f / (static_cast<float>(rows) * static_cast<float>(bsz));
            for (int r = 0; r < rows; ++r) {
              loss += nn::cross_entropy<float>(&posteriors[2 * r], 2, seq.label, &grad_out[2 * r],
                                               w);
              hits += (posteriors[2 * r + 1] > posteriors[2 * r] ? 1 : 0) == seq.label;
            }
            loss_sum += loss / rows;
            acc_sum += static_cast<double>(hits) / rows;
            net_backward(net, grad_out.data(), rows, cache, grad_buf);
          }
          shard_loss[s] = loss_sum;
          shard_acc[s] = acc_sum;
        };

        grads.assign(net.total_params(), 0.0f);
        if (jobs == 1) {
          for (int s = 0; s < n_shards; ++s) run_shard(s, worker_caches[0], grads);
        } else {
          shard_grads.assign(n_shards, {});
          std::vector<std::thread> threads;
          for (int w = 0; w < jobs; ++w) {
            threads.emplace_back([&, w]() {
              for (int s = w; s < n_shards; s += jobs)
                run_shard(s, worker_caches[w], shard_grads[s]);
            });
          }
          for (auto& t : threads) t.join();
          for (int s = 0; s < n_shards; ++s) {
            if (shard_grads[s].empty()) continue;
            for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += shard_grads[s][i];
          }
        }

        for (int s = 0; s < n_shards; ++s) {
          epoch_loss += shard_loss[s];
          epoch_acc += shard_acc[s];
        }
        adam_step(net, grads, adam, cfg.lr);
      }

      epochs_trained = epoch;
      const double acc = val_accuracy();
      log.epochs.push_back({epoch, epoch_loss / static_cast<double>(seqs.size()), acc,
                            epoch_acc / static_cast<double>(seqs.size())});
      if (stopper.observe(net, acc, epoch, cfg.patience)) break;
    }
  }

  stopper.best.restore(net);
  log.best_epoch = stopper.best_epoch;
  log.best_val_acc = stopper.best_acc;

  FitResult result;
  result.checkpoint.net = std::move(net);
  result.checkpoint.norm_stats = stats;
  result.checkpoint.metadata["seed"] = cfg.seed;
  result.checkpoint.metadata["model"] = model_name;
  result.checkpoint.metadata["feature"] = to_string(kind);
  result.checkpoint.metadata["target_rate"] = feature_cfg.target_rate;
  result.checkpoint.metadata["frame_size"] = feature_cfg.framing.frame_size;
  result.checkpoint.metadata["hop"] = feature_cfg.framing.hop;
  result.checkpoint.metadata["window"] = to_string(feature_cfg.framing.window);
  result.checkpoint.metadata["epochs_trained"] = epochs_trained;
  result.checkpoint.metadata["best_epoch"] = stopper.best_epoch;
  result.checkpoint.metadata["best_val_acc"] = stopper.best_acc;
  result.checkpoint.metadata["dropout"] = cfg.dropout;
  result.log = std::move(log);
  return result;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<UtteranceFeatures>& features,
                    Split split, std::vector<UtterancePosterior>* posteriors) {
  std::vector<std::pair<Label, Label>> pairs;
  NetCache cache;
  for (const auto& uf : features) {
    if (uf.split != split) continue;
    if (uf.features.dim != ckpt.net.spec.input_dim)
      throw ShapeError("feature dimension " + std::to_string(uf.features.dim) +
                       " does not match the checkpoint input dim " +
                       std::to_string(ckpt.net.spec.input_dim));
    const FeatureMatrix fm = apply_norm(uf.features, ckpt.norm_stats);
    const auto up = utterance_decision(ckpt.net, fm, uf.utterance_id, cache);
    pairs.emplace_back(uf.label, up.decision);
    if (posteriors) posteriors->push_back(up);
  }
  if (pairs.empty()) throw DataError("no utterances in the requested split");
  return compute_report(pairs);
}

const std::vector<ExperimentPreset>& all_presets() {
  static const std::vector<ExperimentPreset> presets = [] {
    std::vector<ExperimentPreset> p;
    auto fc = [](FeatureKind kind, int rate) {
      FeatureConfig cfg;
      cfg.kind = kind;
      cfg.target_rate = rate;
      return cfg;
    };
    for (int n = 1; n <= 6; ++n) {
      const std::string arch = "arch" + std::to_string(n);
      p.push_back({"table2_" + arch + "_16k", fc(FeatureKind::QseQ1, 16000), arch, std::nullopt});
      p.push_back({"table2_" + arch + "_44k", fc(FeatureKind::QseQ1, 44100), arch, std::nullopt});
    }
    for (int n = 1; n <= 6; ++n) {
      const std::string arch = "arch" + std::to_string(n);
      p.push_back({"table4_" + arch, fc(FeatureKind::Mfcc, 16000), arch, std::nullopt});
    }
    p.push_back({"table5_q1", fc(FeatureKind::QseQ1, 16000), "arch4", std::nullopt});
    p.push_back({"table5_q2", fc(FeatureKind::QseQ2, 16000), "arch4", std::nullopt});
    p.push_back({"table5_q3", fc(FeatureKind::QseQ3, 16000), "arch4", std::nullopt});
    p.push_back({"table5_q4", fc(FeatureKind::QseQ4, 16000), "arch4", std::nullopt});
    p.push_back({"table6_lfbe", fc(FeatureKind::Lfbe, 16000), "lstm64x2", std::nullopt});
    p.push_back({"table6_mfcc", fc(FeatureKind::Mfcc, 16000), "lstm64x2", std::nullopt});
    p.push_back({"table6_qse", fc(FeatureKind::QseQ1, 16000), "lstm64x2", std::nullopt});
    p.push_back({"table7_snr0", fc(FeatureKind::QseQ1, 16000), "arch4", 0.0});
    p.push_back({"table7_snr5", fc(FeatureKind::QseQ1, 16000), "arch4", 5.0});
    p.push_back({"table7_snr10", fc(FeatureKind::QseQ1, 16000), "arch4", 10.0});
    p.push_back({"half_envelope", fc(FeatureKind::QseHalf, 16000), "arch4", std::nullopt});
    return p;
  }();
  return presets;
}

ExperimentPreset preset_by_name(const std::string& name) {
  for (const auto& p : all_presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset: '" + name + "'");
}

EvalReport run_preset(const ExperimentPreset& preset, const Manifest& manifest,
                      const std::filesystem::path& out_dir, const TrainConfig& train_cfg) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

  std::vector<std::pair<std::string, double>> snr_audit;
  const auto features =
      extract_manifest(manifest, preset.feature, train_cfg.jobs, preset.snr_db,
                       mix64(train_cfg.seed, hash_str("preset_noise")), &snr_audit);

  if (preset.snr_db.has_value()) {
    std::ofstream audit(out_dir / "snr_audit.csv", std::ios::trunc);
    audit << "utterance_id,target_snr_db,measured_snr_db\n" << std::fixed << std::setprecision(4);
    for (const auto& [id, snr] : snr_audit)
      audit << id << ',' << *preset.snr_db << ',' << snr << '\n';
    if (!audit) throw IoError("cannot write snr_audit.csv");
  }

  FitResult result = fit(features, preset.model, train_cfg, preset.feature);
  result.checkpoint.metadata["preset"] = preset.name;
  if (preset.snr_db.has_value()) result.checkpoint.metadata["snr_db"] = *preset.snr_db;

  const EvalReport report = evaluate(result.checkpoint, features, Split::Test);

  save_checkpoint(result.checkpoint, out_dir / "model.ckpt");
  std::ofstream log_os(out_dir / "training_log.csv", std::ios::trunc);
  log_os << result.log.to_csv();
  if (!log_os) throw IoError("cannot write training_log.csv");
  save_report(report, out_dir / "report.csv");

  nlohmann::json echo;
  echo["preset"] = preset.name;
  echo["model"] = preset.model;
  echo["feature"] = nlohmann::json::parse(feature_config_to_json(preset.feature));
  if (preset.snr_db.has_value()) echo["snr_db"] = *preset.snr_db;
  echo["train"] = {{"batch_size", train_cfg.batch_size}, {"max_epochs", train_cfg.max_epochs},
                   {"lr", train_cfg.lr},                 {"dropout", train_cfg.dropout},
                   {"val_fraction", train_cfg.val_fraction}, {"patience", train_cfg.patience},
                   {"seed", train_cfg.seed}};
  std::ofstream echo_os(out_dir / "preset_config.json", std::ios::trunc);
  echo_os << echo.dump(2) << '\n';
  if (!echo_os) throw IoError("cannot write preset_config.json");

  return report;
}

}  // namespace whisperline
