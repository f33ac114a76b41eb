#ifndef WHISPERLINE_MODELS_HPP
#define WHISPERLINE_MODELS_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "whisperline/dsp.hpp"
#include "whisperline/layers.hpp"

#include <nlohmann/json.hpp>

namespace whisperline {

// The named architectures: arch1..arch6 (1D-CNN variants differing in conv
// depth, kernel sizes and dense stack) and the lstm64x2 baseline (two
// stacked LSTM layers of 64 cells with a per-frame softmax head).
ModelSpec build_spec(const std::string& name, int input_dim, float dropout_rate = 0.5f);

// build_spec plus deterministic parameter initialization.
Network build(const std::string& name, int input_dim, std::uint64_t seed,
              float dropout_rate = 0.5f);

long long count_params(const ModelSpec& spec);

// 2 * multiply-accumulates per input frame for conv/dense/lstm layers;
// biases, activations and pooling are excluded from the convention.
long long count_flops_per_frame(const ModelSpec& spec);

// Cost of the decision head alone (the final dense layer that produces the
// two-class posteriors).
long long head_flops_per_frame(const ModelSpec& spec);

// Human-readable per-layer table used by the `inspect` command.
std::string describe(const ModelSpec& spec);

struct Checkpoint {
  Network net;
  NormStats norm_stats;
  nlohmann::json metadata;  // seed, epochs, feature kind, framing, ...
};

// Container: magic QSE1, u32 version, u64 header length, JSON header
// (spec, metadata, norm stats, per-block parameter counts), then raw
// little-endian float32 parameter blocks in layer order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace whisperline

#endif  // WHISPERLINE_MODELS_HPP
