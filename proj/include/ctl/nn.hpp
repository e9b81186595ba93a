#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "ctl/env.hpp"
#include "ctl/gemm.hpp"
#include "ctl/rng.hpp"

namespace ctl {

// Fixed architecture: 4x21x21 -> conv 32@5x5/2 -> relu -> conv 64@3x3/1
// -> relu -> fc 256 -> relu -> linear 3. The kernel sizes and strides are
// the module's defining constants: they produce the 3136-unit flatten the
// 256-unit hidden layer consumes.
inline constexpr int kInChannels = kStackFrames;      // 4
inline constexpr int kConv1Channels = 32;
inline constexpr int kConv1Kernel = 5;
inline constexpr int kConv1Stride = 2;
inline constexpr int kConv1Out = (kGridSize - kConv1Kernel) / kConv1Stride + 1;  // 9
inline constexpr int kConv2Channels = 64;
inline constexpr int kConv2Kernel = 3;
inline constexpr int kConv2Out = kConv1Out - kConv2Kernel + 1;  // 7
inline constexpr int kFlatUnits = kConv2Channels * kConv2Out * kConv2Out;  // 3136
inline constexpr int kFc1Units = 256;
inline constexpr int kHeadUnits = kNumActions;  // 3

inline constexpr int kConv1K = kInChannels * kConv1Kernel * kConv1Kernel;      // 100
inline constexpr int kConv1Patches = kConv1Out * kConv1Out;                     // 81
inline constexpr int kConv2K = kConv1Channels * kConv2Kernel * kConv2Kernel;   // 288
inline constexpr int kConv2Patches = kConv2Out * kConv2Out;                     // 49

struct TensorSpec {
  const char* name;
  std::uint8_t rank;
  std::array<std::uint32_t, 4> dims;
  std::size_t count;
};

inline constexpr std::array<TensorSpec, 8> kNetTensors = {{
    {"conv1_w", 4, {32, 4, 5, 5}, 3200},
    {"conv1_b", 1, {32, 0, 0, 0}, 32},
    {"conv2_w", 4, {64, 32, 3, 3}, 18432},
    {"conv2_b", 1, {64, 0, 0, 0}, 64},
    {"fc1_w", 2, {256, 3136, 0, 0}, 802816},
    {"fc1_b", 1, {256, 0, 0, 0}, 256},
    {"head_w", 2, {3, 256, 0, 0}, 768},
    {"head_b", 1, {3, 0, 0, 0}, 3},
}};

inline constexpr int kNumTensors = 8;
inline constexpr int kHeadWeightIndex = 6;
inline constexpr int kHeadBiasIndex = 7;

// All learnable tensors. Also reused for gradients and optimizer
// accumulators, which are shape-congruent by construction.
template <typename T>
struct NetParamsT {
  std::vector<T> conv1_w = std::vector<T>(kNetTensors[0].count);
  std::vector<T> conv1_b = std::vector<T>(kNetTensors[1].count);
  std::vector<T> conv2_w = std::vector<T>(kNetTensors[2].count);
  std::vector<T> conv2_b = std::vector<T>(kNetTensors[3].count);
  std::vector<T> fc1_w = std::vector<T>(kNetTensors[4].count);
  std::vector<T> fc1_b = std::vector<T>(kNetTensors[5].count);
  std::vector<T> head_w = std::vector<T>(kNetTensors[6].count);
  std::vector<T> head_b = std::vector<T>(kNetTensors[7].count);

  std::array<std::vector<T>*, kNumTensors> tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &head_w, &head_b};
  }
  std::array<const std::vector<T>*, kNumTensors> tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &head_w, &head_b};
  }

  friend bool operator==(const NetParamsT&, const NetParamsT&) = default;
};

using NetworkParams = NetParamsT<float>;
using GradientBuffer = NetParamsT<float>;

inline constexpr std::array<int, kNumTensors> kTensorFanIn = {
    kConv1K, 0, kConv2K, 0, kFlatUnits, 0, kFc1Units, 0};

// He-uniform fan-in init (bound sqrt(6/fan_in)) for weights, zero biases.
inline NetworkParams init_params(std::uint64_t seed) {
  NetworkParams p;
  Pcg32 rng = Pcg32::seeded(seed);
  auto list = p.tensors();
  for (int i = 0; i < kNumTensors; ++i) {
    if (kTensorFanIn[i] == 0) continue;  // biases stay zero
    const float bound = std::sqrt(6.0f / static_cast<float>(kTensorFanIn[i]));
    for (auto& w : *list[i]) w = (2.0f * rng.uniform() - 1.0f) * bound;
  }
  return p;
}

// Re-draws only the head, same scheme as init_params. Used by the
// transfer regimes that replace the final layer.
inline void reinit_head(NetworkParams& p, std::uint64_t seed) {
  Pcg32 rng = Pcg32::seeded(seed);
  const float bound = std::sqrt(6.0f / static_cast<float>(kFc1Units));
  for (auto& w : p.head_w) w = (2.0f * rng.uniform() - 1.0f) * bound;
  for (auto& b : p.head_b) b = 0.0f;
}

// Scratch buffers for one forward/backward pass. Grown on demand; reuse
// across calls to avoid reallocation.
template <typename T>
struct WorkspaceT {
  int batch = 0;
  std::vector<T> col1, a1, col2, a2, x, a3, q;
  std::vector<T> dq, da3, dx, da2, dcol2, da1;

  void resize(int b) {
    if (b <= batch) return;
    batch = b;
    col1.resize(static_cast<std::size_t>(kConv1K) * b * kConv1Patches);
    a1.resize(static_cast<std::size_t>(kConv1Channels) * b * kConv1Patches);
    col2.resize(static_cast<std::size_t>(kConv2K) * b * kConv2Patches);
    a2.resize(static_cast<std::size_t>(kConv2Channels) * b * kConv2Patches);
    x.resize(static_cast<std::size_t>(kFlatUnits) * b);
    a3.resize(static_cast<std::size_t>(kFc1Units) * b);
    q.resize(static_cast<std::size_t>(kHeadUnits) * b);
    dq.resize(q.size());
    da3.resize(a3.size());
    dx.resize(x.size());
    da2.resize(a2.size());
    dcol2.resize(col2.size());
    da1.resize(a1.size());
  }
};

using Workspace = WorkspaceT<float>;

namespace detail {

template <typename T>
void im2col_input(const T* in, int batch, T* col) {
  // col[(c*25 + ky*5 + kx)][b*81 + oy*9 + ox] = in[b][c][2oy+ky][2ox+kx]
  const int cols = batch * kConv1Patches;
  for (int c = 0; c < kInChannels; ++c) {
    for (int ky = 0; ky < kConv1Kernel; ++ky) {
      for (int kx = 0; kx < kConv1Kernel; ++kx) {
        T* crow = col + (static_cast<std::size_t>(c) * 25 + ky * 5 + kx) * cols;
        for (int b = 0; b < batch; ++b) {
          const T* src = in + (static_cast<std::size_t>(b) * kInChannels + c) * kFrameCells;
          for (int oy = 0; oy < kConv1Out; ++oy) {
            const T* row = src + (kConv1Stride * oy + ky) * kGridSize + kx;
            T* dst = crow + b * kConv1Patches + oy * kConv1Out;
            for (int ox = 0; ox < kConv1Out; ++ox) dst[ox] = row[kConv1Stride * ox];
          }
        }
      }
    }
  }
}

template <typename T>
void im2col_a1(const T* a1, int batch, T* col) {
  // col[(c*9 + ky*3 + kx)][b*49 + oy*7 + ox] = a1[c][b*81 + (oy+ky)*9 + ox+kx]
  const int cols = batch * kConv2Patches;
  const int a1cols = batch * kConv1Patches;
  for (int c = 0; c < kConv1Channels; ++c) {
    for (int ky = 0; ky < kConv2Kernel; ++ky) {
      for (int kx = 0; kx < kConv2Kernel; ++kx) {
        T* crow = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * cols;
        const T* srow = a1 + static_cast<std::size_t>(c) * a1cols;
        for (int b = 0; b < batch; ++b) {
          for (int oy = 0; oy < kConv2Out; ++oy) {
            const T* src = srow + b * kConv1Patches + (oy + ky) * kConv1Out + kx;
            T* dst = crow + b * kConv2Patches + oy * kConv2Out;
            for (int ox = 0; ox < kConv2Out; ++ox) dst[ox] = src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void bias_relu(T* m, const T* bias, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* row = m + static_cast<std::size_t>(r) * cols;
    const T b = bias[r];
    for (int j = 0; j < cols; ++j) {
      const T v = row[j] + b;
      row[j] = v > T(0) ? v : T(0);
    }
  }
}

}  // namespace detail

// Forward pass for a batch laid out as [b][channel][y][x]. Q-values are
// written to q_out as [b][action]. Pure: same inputs, same outputs.
template <typename T>
void forward_batch(const NetParamsT<T>& p, const T* in, int batch, WorkspaceT<T>& ws,
                   T* q_out) {
  ws.resize(batch);
  const int p1 = batch * kConv1Patches;
  const int p2 = batch * kConv2Patches;

  detail::im2col_input(in, batch, ws.col1.data());
  gemm(false, false, kConv1Channels, p1, kConv1K, p.conv1_w.data(), kConv1K,
       ws.col1.data(), p1, ws.a1.data(), p1);
  detail::bias_relu(ws.a1.data(), p.conv1_b.data(), kConv1Channels, p1);

  detail::im2col_a1(ws.a1.data(), batch, ws.col2.data());
  gemm(false, false, kConv2Channels, p2, kConv2K, p.conv2_w.data(), kConv2K,
       ws.col2.data(), p2, ws.a2.data(), p2);
  detail::bias_relu(ws.a2.data(), p.conv2_b.data(), kConv2Channels, p2);

  // x[c*49 + s][b] = a2[c][b*49 + s]
  for (int c = 0; c < kConv2Channels; ++c) {
    const T* src = ws.a2.data() + static_cast<std::size_t>(c) * p2;
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < kConv2Patches; ++s) {
        ws.x[static_cast<std::size_t>(c * kConv2Patches + s) * batch + b] =
            src[b * kConv2Patches + s];
      }
    }
  }

  gemm(false, false, kFc1Units, batch, kFlatUnits, p.fc1_w.data(), kFlatUnits,
       ws.x.data(), batch, ws.a3.data(), batch);
  detail::bias_relu(ws.a3.data(), p.fc1_b.data(), kFc1Units, batch);

  gemm(false, false, kHeadUnits, batch, kFc1Units, p.head_w.data(), kFc1Units,
       ws.a3.data(), batch, ws.q.data(), batch);
  for (int a = 0; a < kHeadUnits; ++a) {
    const T b = p.head_b[a];
    for (int i = 0; i < batch; ++i) q_out[i * kHeadUnits + a] = ws.q[a * batch + i] + b;
  }
}

template <typename T>
std::array<T, kHeadUnits> forward_one(const NetParamsT<T>& p, const T* obs,
                                      WorkspaceT<T>& ws) {
  std::array<T, kHeadUnits> q{};
  forward_batch(p, obs, 1, ws, q.data());
  return q;
}

// Mean squared TD error over the batch, differentiated only through the
// Q-value of the taken action. Returns the loss and fills `grads` with
// exact analytic gradients. With head_only set, body gradients are
// skipped (the caller freezes those tensors anyway).
template <typename T>
double backward_batch(const NetParamsT<T>& p, const T* in, int batch,
                      const int* actions, const T* targets, WorkspaceT<T>& ws,
                      NetParamsT<T>& grads, bool head_only = false) {
  ws.resize(batch);
  std::vector<T> q(static_cast<std::size_t>(batch) * kHeadUnits);
  forward_batch(p, in, batch, ws, q.data());

  const int p1 = batch * kConv1Patches;
  const int p2 = batch * kConv2Patches;

  // dq[a][b], loss accumulated in double.
  double loss = 0.0;
  std::fill(ws.dq.begin(), ws.dq.begin() + static_cast<std::size_t>(kHeadUnits) * batch, T(0));
  for (int b = 0; b < batch; ++b) {
    const int a = actions[b];
    const double diff = static_cast<double>(q[b * kHeadUnits + a]) - static_cast<double>(targets[b]);
    loss += diff * diff;
    ws.dq[static_cast<std::size_t>(a) * batch + b] = static_cast<T>(2.0 * diff / batch);
  }
  loss /= batch;

  // head
  gemm(false, true, kHeadUnits, kFc1Units, batch, ws.dq.data(), batch,
       ws.a3.data(), batch, grads.head_w.data(), kFc1Units);
  for (int a = 0; a < kHeadUnits; ++a) {
    T sum = T(0);
    for (int b = 0; b < batch; ++b) sum += ws.dq[static_cast<std::size_t>(a) * batch + b];
    grads.head_b[a] = sum;
  }
  if (head_only) return loss;

  gemm(true, false, kFc1Units, batch, kHeadUnits, p.head_w.data(), kFc1Units,
       ws.dq.data(), batch, ws.da3.data(), batch);
  for (std::size_t i = 0; i < static_cast<std::size_t>(kFc1Units) * batch; ++i) {
    if (ws.a3[i] <= T(0)) ws.da3[i] = T(0);
  }

  // fc1
  gemm(false, true, kFc1Units, kFlatUnits, batch, ws.da3.data(), batch, ws.x.data(),
       batch, grads.fc1_w.data(), kFlatUnits);
  for (int r = 0; r < kFc1Units; ++r) {
    T sum = T(0);
    const T* row = ws.da3.data() + static_cast<std::size_t>(r) * batch;
    for (int b = 0; b < batch; ++b) sum += row[b];
    grads.fc1_b[r] = sum;
  }
  gemm(true, false, kFlatUnits, batch, kFc1Units, p.fc1_w.data(), kFlatUnits,
       ws.da3.data(), batch, ws.dx.data(), batch);

  // unflatten into conv2 layout, apply relu mask
  for (int c = 0; c < kConv2Channels; ++c) {
    T* dst = ws.da2.data() + static_cast<std::size_t>(c) * p2;
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < kConv2Patches; ++s) {
        dst[b * kConv2Patches + s] =
            ws.dx[static_cast<std::size_t>(c * kConv2Patches + s) * batch + b];
      }
    }
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(kConv2Channels) * p2; ++i) {
    if (ws.a2[i] <= T(0)) ws.da2[i] = T(0);
  }

  // conv2
  gemm(false, true, kConv2Channels, kConv2K, p2, ws.da2.data(), p2, ws.col2.data(),
       p2, grads.conv2_w.data(), kConv2K);
  for (int c = 0; c < kConv2Channels; ++c) {
    T sum = T(0);
    const T* row = ws.da2.data() + static_cast<std::size_t>(c) * p2;
    for (int j = 0; j < p2; ++j) sum += row[j];
    grads.conv2_b[c] = sum;
  }
  gemm(true, false, kConv2K, p2, kConv2Channels, p.conv2_w.data(), kConv2K,
       ws.da2.data(), p2, ws.dcol2.data(), p2);

  // col2im back into conv1 activation space
  std::fill(ws.da1.begin(), ws.da1.begin() + static_cast<std::size_t>(kConv1Channels) * p1, T(0));
  for (int c = 0; c < kConv1Channels; ++c) {
    T* drow = ws.da1.data() + static_cast<std::size_t>(c) * p1;
    for (int ky = 0; ky < kConv2Kernel; ++ky) {
      for (int kx = 0; kx < kConv2Kernel; ++kx) {
        const T* srow =
            ws.dcol2.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p2;
        for (int b = 0; b < batch; ++b) {
          for (int oy = 0; oy < kConv2Out; ++oy) {
            T* dst = drow + b * kConv1Patches + (oy + ky) * kConv1Out + kx;
            const T* src = srow + b * kConv2Patches + oy * kConv2Out;
            for (int ox = 0; ox < kConv2Out; ++ox) dst[ox] += src[ox];
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(kConv1Channels) * p1; ++i) {
    if (ws.a1[i] <= T(0)) ws.da1[i] = T(0);
  }

  // conv1 (input gradients are not needed)
  gemm(false, true, kConv1Channels, kConv1K, p1, ws.da1.data(), p1, ws.col1.data(),
       p1, grads.conv1_w.data(), kConv1K);
  for (int c = 0; c < kConv1Channels; ++c) {
    T sum = T(0);
    const T* row = ws.da1.data() + static_cast<std::size_t>(c) * p1;
    for (int j = 0; j < p1; ++j) sum += row[j];
    grads.conv1_b[c] = sum;
  }
  return loss;
}

// RMSprop: acc <- rho*acc + (1-rho)*g^2; p <- p - lr*g/sqrt(acc + eps).
struct OptimizerConfig {
  float lr = 0.00025f;
  float rho = 0.95f;
  float eps = 0.01f;
};

struct OptimizerState {
  OptimizerConfig cfg;
  NetParamsT<float> acc;  // squared-gradient accumulators, zero-initialized
};

struct TrainableMask {
  std::array<bool, kNumTensors> trainable;

  static TrainableMask all() {
    TrainableMask m;
    m.trainable.fill(true);
    return m;
  }
  static TrainableMask head_only() {
    TrainableMask m;
    m.trainable.fill(false);
    m.trainable[kHeadWeightIndex] = true;
    m.trainable[kHeadBiasIndex] = true;
    return m;
  }
  bool body_trainable() const {
    for (int i = 0; i < kHeadWeightIndex; ++i) {
      if (trainable[i]) return true;
    }
    return false;
  }

  friend bool operator==(const TrainableMask&, const TrainableMask&) = default;
};

inline void rmsprop_step(NetworkParams& params, const GradientBuffer& grads,
                         OptimizerState& opt,
                         const TrainableMask& mask = TrainableMask::all()) {
  auto pt = params.tensors();
  auto gt = grads.tensors();
  auto at = opt.acc.tensors();
  const float lr = opt.cfg.lr, rho = opt.cfg.rho, eps = opt.cfg.eps;
  for (int t = 0; t < kNumTensors; ++t) {
    if (!mask.trainable[t]) continue;
    float* p = pt[t]->data();
    const float* g = gt[t]->data();
    float* acc = at[t]->data();
    const std::size_t n = pt[t]->size();
    for (std::size_t i = 0; i < n; ++i) {
      acc[i] = rho * acc[i] + (1.0f - rho) * g[i] * g[i];
      p[i] -= lr * g[i] / std::sqrt(acc[i] + eps);
    }
  }
}

}  // namespace ctl
