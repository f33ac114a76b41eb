#include "whisperline/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "whisperline/error.hpp"

namespace whisperline {

UtterancePosterior decide_utterance(const std::vector<float>& frame_posteriors, int n_frames,
                                    const std::string& utterance_id) {
  if (n_frames < 1 || frame_posteriors.size() != static_cast<std::size_t>(n_frames) * 2)
    throw ShapeError("decide_utterance needs an N x 2 posterior matrix with N >= 1");

  double sum0 = 0.0, sum1 = 0.0;
  for (int n = 0; n < n_frames; ++n) {
    const double p0 = frame_posteriors[2 * n];
    const double p1 = frame_posteriors[2 * n + 1];
    if (std::abs(p0 + p1 - 1.0) > 1e-4)
      throw NormalizationError("frame " + std::to_string(n) + " posteriors sum to " +
                               std::to_string(p0 + p1));
    sum0 += p0;
    sum1 += p1;
  }

  UtterancePosterior up;
  up.utterance_id = utterance_id;
  up.n_frames = n_frames;
  up.mean_posterior = {sum0 / n_frames, sum1 / n_frames};
  up.decision = up.mean_posterior[1] > up.mean_posterior[0] ? Label::Whisper : Label::Normal;
  return up;
}

EvalReport compute_report(const std::vector<std::pair<Label, Label>>& truth_decision) {
  if (truth_decision.empty()) throw DataError("compute_report needs at least one decision");

  EvalReport r;
  for (const auto& [truth, decision] : truth_decision) {
    if (truth == Label::Unlabeled || decision == Label::Unlabeled)
      throw LabelError("report entries must be Normal or Whisper");
    r.confusion[static_cast<int>(truth)][static_cast<int>(decision)] += 1;
  }

  for (int c = 0; c < 2; ++c) {
    const int tp = r.confusion[c][c];
    const int fp = r.confusion[1 - c][c];
    const int fn = r.confusion[c][1 - c];
    r.precision[c] = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall[c] = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double pr = r.precision[c] + r.recall[c];
    r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
  }
  const int correct = r.confusion[0][0] + r.confusion[1][1];
  r.accuracy_pct = 100.0 * correct / r.total();
  return r;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed;
  os << "class,precision,recall,f1\n";
  const char* names[2] = {"normal", "whisper"};
  for (int c = 0; c < 2; ++c)
    os << names[c] << ',' << std::setprecision(4) << report.precision[c] << ','
       << report.recall[c] << ',' << report.f1[c] << '\n';
  os << "accuracy," << std::setprecision(2) << report.accuracy_pct << '\n';
  return os.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["confusion"] = {{report.confusion[0][0], report.confusion[0][1]},
                    {report.confusion[1][0], report.confusion[1][1]}};
  for (int c = 0; c < 2; ++c) {
    const std::string name = c == 0 ? "normal" : "whisper";
    j[name]["precision"] = report.precision[c];
    j[name]["recall"] = report.recall[c];
    j[name]["f1"] = report.f1[c];
  }
  j["accuracy_pct"] = report.accuracy_pct;
  return j.dump(2);
}

void save_report(const EvalReport& report, const std::filesystem::path& csv_path) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + csv_path.string());
  os << report_to_csv(report);
  if (!os) throw IoError("short write: " + csv_path.string());

  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream js(json_path, std::ios::trunc);
  js << report_to_json(report) << '\n';
  if (!js) throw IoError("short write: " + json_path.string());
}

}  // namespace whisperline
