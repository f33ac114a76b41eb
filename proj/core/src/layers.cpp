#include "whisperline/layers.hpp"

#include <cmath>

#include "whisperline/error.hpp"

namespace whisperline {

std::string LayerSpec::describe() const {
  switch (type) {
    case LayerType::Conv1D:
      return "conv1d(k=" + std::to_string(kernel) + ", " + std::to_string(out_ch) + " filters" +
             (relu ? ", relu)" : ")");
    case LayerType::MaxPool1D:
      return "maxpool(" + std::to_string(size) + ")";
    case LayerType::Dense:
      return "dense(" + std::to_string(in) + " -> " + std::to_string(out) + ")";
    case LayerType::ReLU:
      return "relu";
    case LayerType::Dropout:
      return "dropout(" + std::to_string(rate).substr(0, 4) + ")";
    case LayerType::Softmax:
      return "softmax";
    case LayerType::Lstm:
      return "lstm(" + std::to_string(in) + " -> " + std::to_string(hidden) + ")";
  }
  return "?";
}

bool Network::recurrent() const {
  for (const auto& l : layers)
    if (l.spec.type == LayerType::Lstm) return true;
  return false;
}

std::size_t Network::total_params() const {
  std::size_t n = 0;
  for (const auto& [p, c] : param_blocks()) n += c;
  return n;
}

std::vector<std::pair<float*, std::size_t>> Network::param_blocks() {
  std::vector<std::pair<float*, std::size_t>> blocks;
  for (auto& l : layers) {
    if (!l.w.empty()) blocks.emplace_back(l.w.data(), l.w.size());
    if (!l.w2.empty()) blocks.emplace_back(l.w2.data(), l.w2.size());
    if (!l.b.empty()) blocks.emplace_back(l.b.data(), l.b.size());
  }
  return blocks;
}

std::vector<std::pair<const float*, std::size_t>> Network::param_blocks() const {
  std::vector<std::pair<const float*, std::size_t>> blocks;
  for (const auto& l : layers) {
    if (!l.w.empty()) blocks.emplace_back(l.w.data(), l.w.size());
    if (!l.w2.empty()) blocks.emplace_back(l.w2.data(), l.w2.size());
    if (!l.b.empty()) blocks.emplace_back(l.b.data(), l.b.size());
  }
  return blocks;
}

namespace {

struct ActShape {
  int rows = 0;  // batch of frames, or timesteps
  int len = 0;   // spatial positions (conv path)
  int ch = 0;
  bool spatial = false;

  std::size_t size() const {
    return static_cast<std::size_t>(rows) * (spatial ? len * ch : len);
  }
  int cols() const { return spatial ? len * ch : len; }
};

// channel-major flatten: dst[b, c*L + l] = src[b, l, c]
void flatten_channel_major(const float* src, int rows, int len, int ch, float* dst) {
  for (int b = 0; b < rows; ++b) {
    const float* s = src + static_cast<std::size_t>(b) * len * ch;
    float* d = dst + static_cast<std::size_t>(b) * len * ch;
    for (int l = 0; l < len; ++l)
      for (int c = 0; c < ch; ++c) d[c * len + l] = s[l * ch + c];
  }
}

void unflatten_channel_major(const float* src, int rows, int len, int ch, float* dst) {
  for (int b = 0; b < rows; ++b) {
    const float* s = src + static_cast<std::size_t>(b) * len * ch;
    float* d = dst + static_cast<std::size_t>(b) * len * ch;
    for (int l = 0; l < len; ++l)
      for (int c = 0; c < ch; ++c) d[l * ch + c] = s[c * len + l];
  }
}

}  // namespace

void net_forward(const Network& net, const float* x, int rows, bool training, Rng* dropout_rng,
                 NetCache& cache, std::vector<float>& posteriors) {
  cache.layers.resize(net.layers.size());

  ActShape shape;
  shape.rows = rows;
  if (net.recurrent()) {
    shape.len = net.spec.input_dim;
    shape.spatial = false;
  } else {
    shape.len = net.spec.input_dim;
    shape.ch = 1;
    shape.spatial = true;
  }

  std::vector<float>* cur = &cache.act_a;
  std::vector<float>* nxt = &cache.act_b;
  cur->assign(x, x + shape.size());

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    LayerCache& lc = cache.layers[li];
    const LayerSpec& s = layer.spec;

    switch (s.type) {
      case LayerType::Conv1D: {
        if (!shape.spatial || shape.ch != s.in_ch)
          throw ShapeError("conv input channel mismatch");
        nxt->resize(static_cast<std::size_t>(shape.rows) * shape.len * s.out_ch);
        nn::conv1d_forward(cur->data(), shape.rows, shape.len, s.in_ch, layer.w.data(), s.kernel,
                           s.out_ch, layer.b.data(), nxt->data(), lc.cols);
        if (s.relu) {
          lc.preact = *nxt;
          nn::relu_forward(nxt->data(), nxt->size(), nxt->data());
        }
        shape.ch = s.out_ch;
        std::swap(cur, nxt);
        break;
      }
      case LayerType::MaxPool1D: {
        if (!shape.spatial) throw ShapeError("maxpool needs a spatial input");
        const int out_len = shape.len / s.size;
        nxt->resize(static_cast<std::size_t>(shape.rows) * out_len * shape.ch);
        nn::maxpool1d_forward(cur->data(), shape.rows, shape.len, shape.ch, s.size, nxt->data(),
                              lc.argmax);
        shape.len = out_len;
        std::swap(cur, nxt);
        break;
      }
      case LayerType::Dense: {
        if (shape.spatial) {
          // implicit channel-major flatten between the conv stack and the head
          nxt->resize(cur->size());
          flatten_channel_major(cur->data(), shape.rows, shape.len, shape.ch, nxt->data());
          std::swap(cur, nxt);
          shape.len = shape.len * shape.ch;
          shape.ch = 0;
          shape.spatial = false;
        }
        if (shape.len != s.in) throw ShapeError("dense input width mismatch: expected " +
                                                std::to_string(s.in) + ", got " +
                                                std::to_string(shape.len));
        lc.input = *cur;
        nxt->resize(static_cast<std::size_t>(shape.rows) * s.out);
        nn::dense_forward(cur->data(), shape.rows, s.in, layer.w.data(), s.out, layer.b.data(),
                          nxt->data());
        shape.len = s.out;
        std::swap(cur, nxt);
        break;
      }
      case LayerType::ReLU: {
        lc.input = *cur;
        nn::relu_forward(cur->data(), cur->size(), cur->data());
        break;
      }
      case LayerType::Dropout: {
        if (training) {
          if (dropout_rng == nullptr) throw ConfigError("training forward needs a dropout rng");
          lc.mask.resize(cur->size());
          const float keep = 1.0f - s.rate;
          for (std::size_t i = 0; i < cur->size(); ++i) {
            lc.mask[i] = dropout_rng->uniform() < s.rate ? 0.0f : 1.0f / keep;
            (*cur)[i] *= lc.mask[i];
          }
        } else {
          lc.mask.clear();  // identity at eval
        }
        break;
      }
      case LayerType::Softmax: {
        nn::softmax_forward(cur->data(), shape.rows, shape.cols(), cur->data());
        lc.output = *cur;
        break;
      }
      case LayerType::Lstm: {
        if (shape.spatial || shape.len != s.in) throw ShapeError("lstm input width mismatch");
        nxt->resize(static_cast<std::size_t>(shape.rows) * s.hidden);
        nn::lstm_forward(cur->data(), shape.rows, s.in, s.hidden, layer.w.data(), layer.w2.data(),
                         layer.b.data(), nxt->data(), &lc.lstm);
        shape.len = s.hidden;
        std::swap(cur, nxt);
        break;
      }
    }
  }

  posteriors = *cur;
}

void net_backward(const Network& net, const float* grad_out, int rows, NetCache& cache,
                  std::vector<float>& grads) {
  // recompute the shape walk so every layer knows its input geometry
  std::vector<ActShape> in_shapes(net.layers.size());
  // pre-flatten geometry for the dense layer that absorbs the conv stack
  std::vector<std::pair<int, int>> flat_shape(net.layers.size(), {0, 0});
  ActShape shape;
  shape.rows = rows;
  shape.len = net.spec.input_dim;
  if (net.recurrent()) {
    shape.spatial = false;
  } else {
    shape.ch = 1;
    shape.spatial = true;
  }
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& s = net.layers[li].spec;
    if (s.type == LayerType::Dense && shape.spatial) {
      flat_shape[li] = {shape.len, shape.ch};
      shape.len = shape.len * shape.ch;
      shape.ch = 0;
      shape.spatial = false;
    }
    in_shapes[li] = shape;
    switch (s.type) {
      case LayerType::Conv1D:
        shape.ch = s.out_ch;
        break;
      case LayerType::MaxPool1D:
        shape.len = shape.len / s.size;
        break;
      case LayerType::Dense:
        shape.len = s.out;
        break;
      case LayerType::Lstm:
        shape.len = s.hidden;
        break;
      default:
        break;
    }
  }

  std::size_t total = 0;
  for (const auto& [p, c] : net.param_blocks()) total += c;
  if (grads.size() != total) grads.assign(total, 0.0f);

  std::vector<float> g(grad_out, grad_out + static_cast<std::size_t>(rows) * shape.cols());
  std::vector<float> g_next;
  std::size_t grad_end = total;

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    LayerCache& lc = cache.layers[li];
    const ActShape& in = in_shapes[li];
    const LayerSpec& s = layer.spec;

    // walk the grad offset backwards over this layer's blocks
    std::size_t n_params = layer.w.size() + layer.w2.size() + layer.b.size();
    const std::size_t grad_begin = grad_end - n_params;

    switch (s.type) {
      case LayerType::Conv1D: {
        if (s.relu) {
          for (std::size_t i = 0; i < g.size(); ++i)
            if (lc.preact[i] <= 0.0f) g[i] = 0.0f;
        }
        std::vector<float> gw(layer.w.size()), gb(layer.b.size());
        g_next.resize(static_cast<std::size_t>(in.rows) * in.len * s.in_ch);
        const bool first = li == 0;
        nn::conv1d_backward(g.data(), in.rows, in.len, s.in_ch, layer.w.data(), s.kernel, s.out_ch,
                            lc.cols, gw.data(), gb.data(), first ? nullptr : g_next.data());
        float* dst = grads.data() + grad_begin;
        for (std::size_t i = 0; i < gw.size(); ++i) dst[i] += gw[i];
        for (std::size_t i = 0; i < gb.size(); ++i) dst[gw.size() + i] += gb[i];
        if (!first) std::swap(g, g_next);
        break;
      }
      case LayerType::MaxPool1D: {
        g_next.resize(static_cast<std::size_t>(in.rows) * in.len * in.ch);
        nn::maxpool1d_backward(g.data(), in.rows, in.len, in.ch, s.size, lc.argmax, g_next.data());
        std::swap(g, g_next);
        break;
      }
      case LayerType::Dense: {
        std::vector<float> gw(layer.w.size()), gb(layer.b.size());
        g_next.resize(static_cast<std::size_t>(in.rows) * s.in);
        nn::dense_backward(g.data(), lc.input.data(), in.rows, s.in, layer.w.data(), s.out,
                           gw.data(), gb.data(), g_next.data());
        float* dst = grads.data() + grad_begin;
        for (std::size_t i = 0; i < gw.size(); ++i) dst[i] += gw[i];
        for (std::size_t i = 0; i < gb.size(); ++i) dst[gw.size() + i] += gb[i];
        std::swap(g, g_next);
        if (flat_shape[li].first > 0) {
          // undo the channel-major flatten: recover [L, C] gradient layout
          const auto [pre_len, pre_ch] = flat_shape[li];
          g_next.resize(g.size());
          unflatten_channel_major(g.data(), rows, pre_len, pre_ch, g_next.data());
          std::swap(g, g_next);
        }
        break;
      }
      case LayerType::ReLU: {
        nn::relu_backward(g.data(), lc.input.data(), g.size(), g.data());
        break;
      }
      case LayerType::Dropout: {
        if (!lc.mask.empty())
          for (std::size_t i = 0; i < g.size(); ++i) g[i] *= lc.mask[i];
        break;
      }
      case LayerType::Softmax: {
        g_next.resize(g.size());
        nn::softmax_backward(g.data(), lc.output.data(), in.rows, in.len, g_next.data());
        std::swap(g, g_next);
        break;
      }
      case LayerType::Lstm: {
        std::vector<float> gwih(layer.w.size()), gwhh(layer.w2.size()), gb(layer.b.size());
        g_next.resize(static_cast<std::size_t>(in.rows) * s.in);
        const bool first = li == 0;
        nn::lstm_backward(g.data(), lc.lstm, layer.w.data(), layer.w2.data(), gwih.data(),
                          gwhh.data(), gb.data(), first ? nullptr : g_next.data());
        float* dst = grads.data() + grad_begin;
        std::size_t off = 0;
        for (std::size_t i = 0; i < gwih.size(); ++i) dst[off + i] += gwih[i];
        off += gwih.size();
        for (std::size_t i = 0; i < gwhh.size(); ++i) dst[off + i] += gwhh[i];
        off += gwhh.size();
        for (std::size_t i = 0; i < gb.size(); ++i) dst[off + i] += gb[i];
        if (!first) std::swap(g, g_next);
        break;
      }
    }
    grad_end = grad_begin;
  }
}

void adam_step(Network& net, const std::vector<float>& grads, AdamState& state, float lr,
               float beta1, float beta2, float eps) {
  auto blocks = net.param_blocks();
  std::size_t total = 0;
  for (const auto& [p, c] : blocks) total += c;
  if (grads.size() != total) throw ShapeError("gradient buffer does not match parameter count");
  if (state.m.size() != total) {
    state.m.assign(total, 0.0f);
    state.v.assign(total, 0.0f);
    state.t = 0;
  }

  state.t += 1;
  const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(state.t));
  const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(state.t));

  std::size_t off = 0;
  for (auto& [p, count] : blocks) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = off + i;
      const float gr = grads[j];
      state.m[j] = beta1 * state.m[j] + (1.0f - beta1) * gr;
      state.v[j] = beta2 * state.v[j] + (1.0f - beta2) * gr * gr;
      const float mhat = state.m[j] / bc1;
      const float vhat = state.v[j] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    off += count;
  }
}

}  // namespace whisperline
