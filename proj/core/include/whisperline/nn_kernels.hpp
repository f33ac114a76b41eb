#ifndef WHISPERLINE_NN_KERNELS_HPP
#define WHISPERLINE_NN_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "whisperline/error.hpp"

// Low-level forward/backward kernels, templated on the scalar so the float32
// production path and the float64 gradient checks share one implementation.
//
// Activation layout conventions:
//   spatial tensors  [B, L, C]  row-major, channel-last:  idx = (b*L + l)*C + c
//   flat tensors     [rows, cols] row-major
// Convolution weights are [k*C_in, C_out] row-major (tap-major, then input
// channel), matching the im2col column order. "Same" zero padding splits
// floor/ceil for even kernels: pad_left = (k-1)/2.

namespace whisperline::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------- conv1d ---

template <typename T>
void conv1d_im2col(const T* x, int batch, int len, int c_in, int kernel, std::vector<T>& cols) {
  const int pad_left = (kernel - 1) / 2;
  const std::size_t row_w = static_cast<std::size_t>(kernel) * c_in;
  cols.assign(static_cast<std::size_t>(batch) * len * row_w, T(0));
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < len; ++l) {
      T* row = &cols[(static_cast<std::size_t>(b) * len + l) * row_w];
      for (int j = 0; j < kernel; ++j) {
        const int src = l + j - pad_left;
        if (src >= 0 && src < len)
          std::copy_n(x + (static_cast<std::size_t>(b) * len + src) * c_in, c_in,
                      row + static_cast<std::size_t>(j) * c_in);
      }
    }
  }
}

// out must hold batch*len*c_out values. cols is scratch, reused by backward.
template <typename T>
void conv1d_forward(const T* x, int batch, int len, int c_in, const T* w, int kernel, int c_out,
                    const T* bias, T* out, std::vector<T>& cols) {
  if (kernel > len) throw ShapeError("conv kernel larger than input length");
  conv1d_im2col(x, batch, len, c_in, kernel, cols);
  const int rows = batch * len;
  const int row_w = kernel * c_in;
  CMapM<T> a(cols.data(), rows, row_w);
  CMapM<T> wm(w, row_w, c_out);
  MapM<T> om(out, rows, c_out);
  om.noalias() = a * wm;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < c_out; ++c) om(r, c) += bias[c];
}

// grad_out is [B, L, C_out]; cols must be the forward's im2col buffer.
// grad_x may be null when the input gradient is not needed (first layer).
template <typename T>
void conv1d_backward(const T* grad_out, int batch, int len, int c_in, const T* w, int kernel,
                     int c_out, const std::vector<T>& cols, T* grad_w, T* grad_b, T* grad_x) {
  const int rows = batch * len;
  const int row_w = kernel * c_in;
  const int pad_left = (kernel - 1) / 2;
  CMapM<T> go(grad_out, rows, c_out);
  CMapM<T> a(cols.data(), rows, row_w);

  MapM<T> gw(grad_w, row_w, c_out);
  gw.noalias() = a.transpose() * go;
  for (int c = 0; c < c_out; ++c) {
    T acc = T(0);
    for (int r = 0; r < rows; ++r) acc += go(r, c);
    grad_b[c] = acc;
  }

  if (grad_x != nullptr) {
    CMapM<T> wm(w, row_w, c_out);
    MatRM<T> grad_cols = go * wm.transpose();  // [rows, row_w]
    std::fill_n(grad_x, static_cast<std::size_t>(batch) * len * c_in, T(0));
    for (int b = 0; b < batch; ++b) {
      for (int l = 0; l < len; ++l) {
        const T* row = grad_cols.data() + (static_cast<std::size_t>(b) * len + l) * row_w;
        for (int j = 0; j < kernel; ++j) {
          const int src = l + j - pad_left;
          if (src < 0 || src >= len) continue;
          T* dst = grad_x + (static_cast<std::size_t>(b) * len + src) * c_in;
          const T* g = row + static_cast<std::size_t>(j) * c_in;
          for (int c = 0; c < c_in; ++c) dst[c] += g[c];
        }
      }
    }
  }
}

// -------------------------------------------------------------- maxpool ----

// Non-overlapping windows; an odd trailing element is dropped. Ties resolve
// to the earlier index. argmax records absolute source positions.
template <typename T>
void maxpool1d_forward(const T* x, int batch, int len, int channels, int size, T* out,
                       std::vector<std::int32_t>& argmax) {
  if (len < size) throw ShapeError("maxpool input shorter than pool size");
  const int out_len = len / size;
  argmax.resize(static_cast<std::size_t>(batch) * out_len * channels);
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < out_len; ++l) {
      for (int c = 0; c < channels; ++c) {
        int best = l * size;
        T best_v = x[(static_cast<std::size_t>(b) * len + best) * channels + c];
        for (int j = 1; j < size; ++j) {
          const int pos = l * size + j;
          const T v = x[(static_cast<std::size_t>(b) * len + pos) * channels + c];
          if (v > best_v) {
            best_v = v;
            best = pos;
          }
        }
        const std::size_t oi = (static_cast<std::size_t>(b) * out_len + l) * channels + c;
        out[oi] = best_v;
        argmax[oi] = best;
      }
    }
  }
}

template <typename T>
void maxpool1d_backward(const T* grad_out, int batch, int len, int channels, int size,
                        const std::vector<std::int32_t>& argmax, T* grad_x) {
  const int out_len = len / size;
  std::fill_n(grad_x, static_cast<std::size_t>(batch) * len * channels, T(0));
  for (int b = 0; b < batch; ++b)
    for (int l = 0; l < out_len; ++l)
      for (int c = 0; c < channels; ++c) {
        const std::size_t oi = (static_cast<std::size_t>(b) * out_len + l) * channels + c;
        grad_x[(static_cast<std::size_t>(b) * len + argmax[oi]) * channels + c] += grad_out[oi];
      }
}

// ---------------------------------------------------------------- dense ----

template <typename T>
void dense_forward(const T* x, int rows, int in, const T* w, int out_dim, const T* bias, T* out) {
  CMapM<T> xm(x, rows, in);
  CMapM<T> wm(w, in, out_dim);
  MapM<T> om(out, rows, out_dim);
  om.noalias() = xm * wm;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < out_dim; ++c) om(r, c) += bias[c];
}

template <typename T>
void dense_backward(const T* grad_out, const T* x, int rows, int in, const T* w, int out_dim,
                    T* grad_w, T* grad_b, T* grad_x) {
  CMapM<T> go(grad_out, rows, out_dim);
  CMapM<T> xm(x, rows, in);
  MapM<T> gw(grad_w, in, out_dim);
  gw.noalias() = xm.transpose() * go;
  for (int c = 0; c < out_dim; ++c) {
    T acc = T(0);
    for (int r = 0; r < rows; ++r) acc += go(r, c);
    grad_b[c] = acc;
  }
  if (grad_x != nullptr) {
    CMapM<T> wm(w, in, out_dim);
    MapM<T> gx(grad_x, rows, in);
    gx.noalias() = go * wm.transpose();
  }
}

// ----------------------------------------------------- relu / softmax ------

template <typename T>
void relu_forward(const T* x, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* grad_out, const T* x, std::size_t n, T* grad_x) {
  for (std::size_t i = 0; i < n; ++i) grad_x[i] = x[i] > T(0) ? grad_out[i] : T(0);
}

template <typename T>
void softmax_forward(const T* x, int rows, int cols, T* out) {
  for (int r = 0; r < rows; ++r) {
    const T* xi = x + static_cast<std::size_t>(r) * cols;
    T* oi = out + static_cast<std::size_t>(r) * cols;
    T mx = xi[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xi[c]);
    T sum = T(0);
    for (int c = 0; c < cols; ++c) {
      oi[c] = std::exp(xi[c] - mx);
      sum += oi[c];
    }
    for (int c = 0; c < cols; ++c) oi[c] /= sum;
  }
}

// grad wrt logits given grad wrt probabilities: p .* (g - <g, p>)
template <typename T>
void softmax_backward(const T* grad_out, const T* p, int rows, int cols, T* grad_x) {
  for (int r = 0; r < rows; ++r) {
    const T* gi = grad_out + static_cast<std::size_t>(r) * cols;
    const T* pi = p + static_cast<std::size_t>(r) * cols;
    T* oi = grad_x + static_cast<std::size_t>(r) * cols;
    T dot = T(0);
    for (int c = 0; c < cols; ++c) dot += gi[c] * pi[c];
    for (int c = 0; c < cols; ++c) oi[c] = pi[c] * (gi[c] - dot);
  }
}

// ---------------------------------------------------------- cross entropy --

// loss = -log(max(p_label, floor)); grad is wrt the posterior row, scaled by
// `weight` (callers pass 1/batch to get a mean loss gradient).
template <typename T>
T cross_entropy(const T* posteriors, int n_classes, int label, T* grad, T weight) {
  if (label < 0 || label >= n_classes) throw LabelError("label index out of range");
  const T floor = static_cast<T>(1e-12);
  const T p = std::max(posteriors[label], floor);
  if (grad != nullptr) {
    for (int c = 0; c < n_classes; ++c) grad[c] = T(0);
    grad[label] = -weight / p;
  }
  return -std::log(p);
}

// ----------------------------------------------------------------- lstm ----

// Gate order in the stacked weight rows: input, forget, cell, output.
// w_ih is [4H, D_in], w_hh is [4H, H], b is [4H]. Caches hold per-timestep
// activations needed by backward-through-time.
template <typename T>
struct LstmCache {
  int steps = 0, in = 0, hidden = 0;
  std::vector<T> x;       // [T, D]
  std::vector<T> h;       // [T, H] (outputs)
  std::vector<T> c;       // [T, H]
  std::vector<T> gates;   // [T, 4H] post-nonlinearity (i, f, g, o)
  std::vector<T> tanh_c;  // [T, H]
};

template <typename T>
inline T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
void lstm_forward(const T* x, int steps, int in, int hidden, const T* w_ih, const T* w_hh,
                  const T* b, T* out, LstmCache<T>* cache) {
  if (steps < 1) throw ShapeError("lstm needs at least one timestep");
  const int g4 = 4 * hidden;
  std::vector<T> h_prev(hidden, T(0)), c_prev(hidden, T(0)), z(g4);

  if (cache) {
    cache->steps = steps;
    cache->in = in;
    cache->hidden = hidden;
    cache->x.assign(x, x + static_cast<std::size_t>(steps) * in);
    cache->h.resize(static_cast<std::size_t>(steps) * hidden);
    cache->c.resize(static_cast<std::size_t>(steps) * hidden);
    cache->gates.resize(static_cast<std::size_t>(steps) * g4);
    cache->tanh_c.resize(static_cast<std::size_t>(steps) * hidden);
  }

  CMapM<T> wih(w_ih, g4, in);
  CMapM<T> whh(w_hh, g4, hidden);
  for (int t = 0; t < steps; ++t) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xt(x + static_cast<std::size_t>(t) * in,
                                                             in);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> hp(h_prev.data(), hidden);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> zm(z.data(), g4);
    zm.noalias() = wih * xt + whh * hp;
    for (int i = 0; i < g4; ++i) z[i] += b[i];

    for (int i = 0; i < hidden; ++i) {
      const T ig = sigmoid(z[i]);
      const T fg = sigmoid(z[hidden + i]);
      const T gg = std::tanh(z[2 * hidden + i]);
      const T og = sigmoid(z[3 * hidden + i]);
      const T ct = fg * c_prev[i] + ig * gg;
      const T th = std::tanh(ct);
      const T ht = og * th;
      out[static_cast<std::size_t>(t) * hidden + i] = ht;
      if (cache) {
        cache->gates[static_cast<std::size_t>(t) * g4 + i] = ig;
        cache->gates[static_cast<std::size_t>(t) * g4 + hidden + i] = fg;
        cache->gates[static_cast<std::size_t>(t) * g4 + 2 * hidden + i] = gg;
        cache->gates[static_cast<std::size_t>(t) * g4 + 3 * hidden + i] = og;
        cache->c[static_cast<std::size_t>(t) * hidden + i] = ct;
        cache->tanh_c[static_cast<std::size_t>(t) * hidden + i] = th;
      }
      c_prev[i] = ct;
      h_prev[i] = ht;
    }
    if (cache)
      std::copy_n(h_prev.data(), hidden, cache->h.data() + static_cast<std::size_t>(t) * hidden);
  }
}

template <typename T>
void lstm_backward(const T* grad_out, const LstmCache<T>& cache, const T* w_ih, const T* w_hh,
                   T* grad_w_ih, T* grad_w_hh, T* grad_b, T* grad_x) {
  const int steps = cache.steps, in = cache.in, hidden = cache.hidden;
  const int g4 = 4 * hidden;
  std::fill_n(grad_w_ih, static_cast<std::size_t>(g4) * in, T(0));
  std::fill_n(grad_w_hh, static_cast<std::size_t>(g4) * hidden, T(0));
  std::fill_n(grad_b, g4, T(0));
  if (grad_x) std::fill_n(grad_x, static_cast<std::size_t>(steps) * in, T(0));

  std::vector<T> dh(hidden, T(0)), dc(hidden, T(0)), dz(g4);
  CMapM<T> wih(w_ih, g4, in);
  CMapM<T> whh(w_hh, g4, hidden);
  MapM<T> gwih(grad_w_ih, g4, in);
  MapM<T> gwhh(grad_w_hh, g4, hidden);

  for (int t = steps - 1; t >= 0; --t) {
    const T* gates = &cache.gates[static_cast<std::size_t>(t) * g4];
    const T* th = &cache.tanh_c[static_cast<std::size_t>(t) * hidden];
    for (int i = 0; i < hidden; ++i) {
      dh[i] += grad_out[static_cast<std::size_t>(t) * hidden + i];
      const T og = gates[3 * hidden + i];
      dc[i] += dh[i] * og * (T(1) - th[i] * th[i]);
    }
    for (int i = 0; i < hidden; ++i) {
      const T ig = gates[i], fg = gates[hidden + i], gg = gates[2 * hidden + i],
              og = gates[3 * hidden + i];
      const T c_prev = t > 0 ? cache.c[static_cast<std::size_t>(t - 1) * hidden + i] : T(0);
      dz[i] = dc[i] * gg * ig * (T(1) - ig);
      dz[hidden + i] = dc[i] * c_prev * fg * (T(1) - fg);
      dz[2 * hidden + i] = dc[i] * ig * (T(1) - gg * gg);
      dz[3 * hidden + i] = dh[i] * th[i] * og * (T(1) - og);
    }

    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xt(
        cache.x.data() + static_cast<std::size_t>(t) * in, in);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dzm(dz.data(), g4);
    gwih.noalias() += dzm * xt.transpose();
    if (t > 0) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> hp(
          cache.h.data() + static_cast<std::size_t>(t - 1) * hidden, hidden);
      gwhh.noalias() += dzm * hp.transpose();
    }
    for (int i = 0; i < g4; ++i) grad_b[i] += dz[i];

    if (grad_x) {
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gx(
          grad_x + static_cast<std::size_t>(t) * in, in);
      gx.noalias() = wih.transpose() * dzm;
    }
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dhm(dh.data(), hidden);
    dhm.noalias() = whh.transpose() * dzm;
    for (int i = 0; i < hidden; ++i) dc[i] *= gates[hidden + i];  // through forget gate
  }
}

}  // namespace whisperline::nn

#endif  // WHISPERLINE_NN_KERNELS_HPP
