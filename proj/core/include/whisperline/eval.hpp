#ifndef WHISPERLINE_EVAL_HPP
#define WHISPERLINE_EVAL_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "whisperline/audio_io.hpp"

namespace whisperline {

// Utterance-level decision: mean of the per-frame posteriors, argmax wins,
// exact ties resolve to Normal (class index 0).
struct UtterancePosterior {
  std::string utterance_id;
  std::array<double, 2> mean_posterior{0.0, 0.0};
  Label decision = Label::Normal;
  int n_frames = 0;
};

struct EvalReport {
  // rows = truth (Normal, Whisper), cols = decision
  std::array<std::array<int, 2>, 2> confusion{{{0, 0}, {0, 0}}};
  std::array<double, 2> precision{0.0, 0.0};
  std::array<double, 2> recall{0.0, 0.0};
  std::array<double, 2> f1{0.0, 0.0};
  double accuracy_pct = 0.0;  // percent, reported to two decimals

  int total() const {
    return confusion[0][0] + confusion[0][1] + confusion[1][0] + confusion[1][1];
  }
};

// frame_posteriors: n_frames rows of 2, each summing to 1 within 1e-4.
UtterancePosterior decide_utterance(const std::vector<float>& frame_posteriors, int n_frames,
                                    const std::string& utterance_id = {});

EvalReport compute_report(const std::vector<std::pair<Label, Label>>& truth_decision);

// CSV: `class,precision,recall,f1` rows then a final `accuracy,<pct>` line.
std::string report_to_csv(const EvalReport& report);
// JSON mirror including the confusion matrix.
std::string report_to_json(const EvalReport& report);

void save_report(const EvalReport& report, const std::filesystem::path& csv_path);

}  // namespace whisperline

#endif  // WHISPERLINE_EVAL_HPP
