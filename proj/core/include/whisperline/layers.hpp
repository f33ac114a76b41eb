#ifndef WHISPERLINE_LAYERS_HPP
#define WHISPERLINE_LAYERS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "whisperline/nn_kernels.hpp"
#include "whisperline/rng.hpp"

namespace whisperline {

enum class LayerType : std::uint8_t {
  Conv1D = 0,
  MaxPool1D = 1,
  Dense = 2,
  ReLU = 3,
  Dropout = 4,
  Softmax = 5,
  Lstm = 6,
};

// Hyperparameters of one layer; which fields apply depends on type.
// Convolutions carry their ReLU activation as an attribute; dense
// activations are explicit ReLU layers.
struct LayerSpec {
  LayerType type = LayerType::ReLU;
  int kernel = 0;    // conv
  int in_ch = 0;     // conv
  int out_ch = 0;    // conv
  bool relu = false; // conv fused activation
  int size = 2;      // pool
  int in = 0;        // dense / lstm input width
  int out = 0;       // dense
  int hidden = 0;    // lstm
  float rate = 0.0f; // dropout

  std::string describe() const;
};

// A layer with its trainable parameters (float32 throughout).
struct Layer {
  LayerSpec spec;
  std::vector<float> w;     // conv [k*in_ch, out_ch]; dense [in, out]; lstm w_ih [4H, in]
  std::vector<float> w2;    // lstm w_hh [4H, H]
  std::vector<float> b;     // conv/dense bias; lstm stacked gate bias [4H]
};

struct ModelSpec {
  std::string name;  // arch1..arch6 | lstm64x2
  int input_dim = 0;
  std::vector<LayerSpec> layers;
};

struct Network {
  ModelSpec spec;
  std::vector<Layer> layers;

  bool recurrent() const;
  std::size_t total_params() const;
  // (pointer, count) spans over every parameter block, in serialization order
  std::vector<std::pair<float*, std::size_t>> param_blocks();
  std::vector<std::pair<const float*, std::size_t>> param_blocks() const;
};

// Per-worker forward/backward scratch; reused across batches.
struct LayerCache {
  std::vector<float> input;
  std::vector<float> cols;
  std::vector<float> preact;
  std::vector<float> output;
  std::vector<float> mask;
  std::vector<std::int32_t> argmax;
  nn::LstmCache<float> lstm;
};

struct NetCache {
  std::vector<LayerCache> layers;
  std::vector<float> act_a, act_b;
};

// Runs rows of input_dim-wide frames through the network and writes
// posteriors [rows, n_out]. For recurrent models the rows are the timesteps
// of one utterance, in order. dropout_rng must be non-null when training and
// the net has dropout layers.
void net_forward(const Network& net, const float* x, int rows, bool training, Rng* dropout_rng,
                 NetCache& cache, std::vector<float>& posteriors);

// Backpropagates grad wrt the network output (same shape as posteriors)
// through the caches of the immediately preceding net_forward call,
// accumulating parameter gradients into grads (laid out like param_blocks,
// concatenated). grads must be zeroed (or hold a running sum) by the caller.
void net_backward(const Network& net, const float* grad_out, int rows, NetCache& cache,
                  std::vector<float>& grads);

struct AdamState {
  std::vector<float> m, v;
  long t = 0;
};

void adam_step(Network& net, const std::vector<float>& grads, AdamState& state, float lr,
               float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

}  // namespace whisperline

#endif  // WHISPERLINE_LAYERS_HPP
