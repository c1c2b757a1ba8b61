#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnu/plane.hpp"
#include "prnu/random.hpp"

namespace prnu::neural {

/// Raised when training produces a non-finite loss or gradient.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMinInputSide = 16;

/// Layer sizes of the comparator: 3x3 stride-2 convolutions with a rectifier after each,
/// global average pooling, then a linear head and a sigmoid.
struct Architecture {
  std::vector<int> channels{8, 16, 32, 64};

  [[nodiscard]] int in_channels(std::size_t layer) const { return layer == 0 ? 1 : channels[layer - 1]; }
  [[nodiscard]] std::size_t conv_weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += conv_params(l);
    return off;
  }
  [[nodiscard]] std::size_t conv_params(std::size_t layer) const {
    const auto out = static_cast<std::size_t>(channels[layer]);
    return out * static_cast<std::size_t>(in_channels(layer)) * 9 + out;
  }
  [[nodiscard]] std::size_t head_offset() const { return conv_weight_offset(channels.size()); }
  [[nodiscard]] std::size_t param_count() const { return head_offset() + static_cast<std::size_t>(channels.back()) + 1; }

  void validate() const {
    if (channels.empty()) throw InvalidArgument("architecture needs at least one conv layer");
    for (int c : channels)
      if (c < 1) throw InvalidArgument("conv channel counts must be positive");
  }
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Parameters of the comparator, flattened in layer order:
/// per conv layer weights[out][in][3][3] then bias[out]; then head weights[C] and head bias.
struct ComparatorModel {
  Architecture arch;
  std::vector<double> params;

  ComparatorModel() = default;
  explicit ComparatorModel(Architecture a) : arch(std::move(a)) {
    arch.validate();
    params.assign(arch.param_count(), 0.0);
  }

  /// Fan-in-scaled normal weights, zero biases.
  static ComparatorModel initialized(Architecture a, std::uint64_t seed) {
    ComparatorModel m(std::move(a));
    Rng rng(hash_combine(seed, 0x6d6f64656cULL));
    for (std::size_t l = 0; l < m.arch.channels.size(); ++l) {
      const double fan_in = m.arch.in_channels(l) * 9.0;
      const double sd = std::sqrt(2.0 / fan_in);
      auto w = m.conv_weights(l);
      for (double& v : w) v = rng.normal(0.0, sd);
    }
    const double sd = std::sqrt(1.0 / m.arch.channels.back());
    for (double& v : m.head_weights()) v = rng.normal(0.0, sd);
    return m;
  }

  [[nodiscard]] std::span<double> conv_weights(std::size_t l) {
    const auto out = static_cast<std::size_t>(arch.channels[l]);
    return {params.data() + arch.conv_weight_offset(l), out * arch.in_channels(l) * 9};
  }
  [[nodiscard]] std::span<const double> conv_weights(std::size_t l) const {
    const auto out = static_cast<std::size_t>(arch.channels[l]);
    return {params.data() + arch.conv_weight_offset(l), out * arch.in_channels(l) * 9};
  }
  [[nodiscard]] std::span<double> conv_bias(std::size_t l) {
    return {params.data() + arch.conv_weight_offset(l) + conv_weights(l).size(),
            static_cast<std::size_t>(arch.channels[l])};
  }
  [[nodiscard]] std::span<const double> conv_bias(std::size_t l) const {
    return {params.data() + arch.conv_weight_offset(l) + conv_weights(l).size(),
            static_cast<std::size_t>(arch.channels[l])};
  }
  [[nodiscard]] std::span<double> head_weights() {
    return {params.data() + arch.head_offset(), static_cast<std::size_t>(arch.channels.back())};
  }
  [[nodiscard]] std::span<const double> head_weights() const {
    return {params.data() + arch.head_offset(), static_cast<std::size_t>(arch.channels.back())};
  }
  [[nodiscard]] double& head_bias() { return params.back(); }
  [[nodiscard]] double head_bias() const { return params.back(); }

  friend bool operator==(const ComparatorModel&, const ComparatorModel&) = default;
};

/// Channel-major activation volume.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  [[nodiscard]] double* channel(int k) { return v.data() + static_cast<std::size_t>(k) * h * w; }
  [[nodiscard]] const double* channel(int k) const { return v.data() + static_cast<std::size_t>(k) * h * w; }
};

namespace detail {

inline double sigmoid(double z) noexcept {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  // Keep the output inside the open interval even when exp() saturates.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(p, lo, hi);
}

// Output-x range [lo, hi) for which 2x + kx - 1 lies inside [0, in_w).
inline void valid_range(int kx, int in_w, int out_w, int& lo, int& hi) noexcept {
  lo = kx == 0 ? 1 : 0;
  hi = std::min(out_w, (in_w - kx + 2) / 2);
  if (hi < lo) hi = lo;
}

inline Tensor conv3x3_s2(const Tensor& in, std::span<const double> weights, std::span<const double> bias, int out_c) {
  Tensor out(out_c, (in.h + 1) / 2, (in.w + 1) / 2);
  for (int o = 0; o < out_c; ++o) {
    double* dst = out.channel(o);
    std::fill(dst, dst + static_cast<std::size_t>(out.h) * out.w, bias[o]);
    for (int i = 0; i < in.c; ++i) {
      const double* src = in.channel(i);
      const double* wk = weights.data() + (static_cast<std::size_t>(o) * in.c + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        int ylo, yhi;
        valid_range(ky, in.h, out.h, ylo, yhi);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wk[ky * 3 + kx];
          int xlo, xhi;
          valid_range(kx, in.w, out.w, xlo, xhi);
          for (int y = ylo; y < yhi; ++y) {
            const double* srow = src + static_cast<std::size_t>(2 * y + ky - 1) * in.w + (kx - 1);
            double* drow = dst + static_cast<std::size_t>(y) * out.w;
            for (int x = xlo; x < xhi; ++x) drow[x] += wv * srow[2 * x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients and (optionally) the input gradient of conv3x3_s2.
inline void conv3x3_s2_backward(const Tensor& in, const Tensor& grad_out, std::span<const double> weights,
                                std::span<double> grad_w, std::span<double> grad_b, Tensor* grad_in) {
  for (int o = 0; o < grad_out.c; ++o) {
    const double* go = grad_out.channel(o);
    double gb = 0.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(grad_out.h) * grad_out.w; ++k) gb += go[k];
    grad_b[o] += gb;
    for (int i = 0; i < in.c; ++i) {
      const double* src = in.channel(i);
      double* gi = grad_in ? grad_in->channel(i) : nullptr;
      const std::size_t base = (static_cast<std::size_t>(o) * in.c + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        int ylo, yhi;
        valid_range(ky, in.h, grad_out.h, ylo, yhi);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = weights[base + ky * 3 + kx];
          int xlo, xhi;
          valid_range(kx, in.w, grad_out.w, xlo, xhi);
          double gw = 0.0;
          for (int y = ylo; y < yhi; ++y) {
            const std::size_t row = static_cast<std::size_t>(2 * y + ky - 1) * in.w + (kx - 1);
            const double* srow = src + row;
            const double* grow = go + static_cast<std::size_t>(y) * grad_out.w;
            for (int x = xlo; x < xhi; ++x) gw += grow[x] * srow[2 * x];
            if (gi) {
              double* girow = gi + row;
              for (int x = xlo; x < xhi; ++x) girow[2 * x] += wv * grow[x];
            }
          }
          grad_w[base + ky * 3 + kx] += gw;
        }
      }
    }
  }
}

inline Tensor to_tensor(const Plane& plane) {
  Tensor t(1, plane.height(), plane.width());
  auto v = plane.values();
  std::copy(v.begin(), v.end(), t.v.begin());
  return t;
}

}  // namespace detail

/// Activations retained for the backward pass.
struct ForwardTrace {
  std::vector<Tensor> pre;   // conv outputs before the rectifier
  std::vector<Tensor> post;  // rectified outputs; post[0] is the input
  std::vector<double> pooled;
  double logit = 0.0;
  double probability = 0.5;
};

inline ForwardTrace forward_trace(const ComparatorModel& model, const Plane& input) {
  if (input.height() < kMinInputSide || input.width() < kMinInputSide)
    throw InvalidArgument("comparator input " + to_string(input.size()) + " below 16x16");
  if (model.params.size() != model.arch.param_count()) throw InvalidArgument("model parameter count mismatch");
  ForwardTrace t;
  t.post.push_back(detail::to_tensor(input));
  for (std::size_t l = 0; l < model.arch.channels.size(); ++l) {
    Tensor z = detail::conv3x3_s2(t.post.back(), model.conv_weights(l), model.conv_bias(l), model.arch.channels[l]);
    Tensor a = z;
    for (double& v : a.v) v = v > 0.0 ? v : 0.0;
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  const Tensor& last = t.post.back();
  const double area = static_cast<double>(last.h) * last.w;
  t.pooled.assign(last.c, 0.0);
  for (int k = 0; k < last.c; ++k) {
    const double* ch = last.channel(k);
    double s = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(last.h) * last.w; ++i) s += ch[i];
    t.pooled[k] = s / area;
  }
  auto hw = model.head_weights();
  double z = model.head_bias();
  for (int k = 0; k < last.c; ++k) z += hw[k] * t.pooled[k];
  t.logit = z;
  t.probability = detail::sigmoid(z);
  return t;
}

/// Probability that the product plane comes from a matching fingerprint/residual pair.
inline double forward(const ComparatorModel& model, const Plane& input) {
  return forward_trace(model, input).probability;
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Per-sample binary cross-entropy with the probability clamped to [eps, 1-eps].
inline double bce(double p, double label) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
}

/// Loss of one (positive, negative) pair: -log p_pos - log(1 - p_neg).
inline double bce_pair_loss(double p_pos, double p_neg) { return bce(p_pos, 1.0) + bce(p_neg, 0.0); }

struct Gradients {
  std::vector<double> values;  // aligned with ComparatorModel::params
  double loss = 0.0;           // mean per-sample BCE
  std::vector<double> probabilities;
};

/// Analytic gradient of the mean per-sample BCE over the batch.
inline Gradients backward(const ComparatorModel& model, std::span<const Plane> inputs, std::span<const double> labels) {
  if (inputs.size() != labels.size() || inputs.empty())
    throw InvalidArgument("backward: batch inputs and labels must be nonempty and aligned");
  Gradients g;
  g.values.assign(model.params.size(), 0.0);
  const double m = static_cast<double>(inputs.size());
  const std::size_t layers = model.arch.channels.size();
  const std::size_t head = model.arch.head_offset();

  for (std::size_t s = 0; s < inputs.size(); ++s) {
    ForwardTrace t = forward_trace(model, inputs[s]);
    g.probabilities.push_back(t.probability);
    g.loss += bce(t.probability, labels[s]) / m;

    const double dlogit = (t.probability - labels[s]) / m;
    const Tensor& last = t.post.back();
    auto hw = model.head_weights();
    for (int k = 0; k < last.c; ++k) g.values[head + k] += dlogit * t.pooled[k];
    g.values.back() += dlogit;

    // Gradient w.r.t. the rectified output of the last layer.
    Tensor grad(last.c, last.h, last.w);
    const double inv_area = 1.0 / (static_cast<double>(last.h) * last.w);
    for (int k = 0; k < last.c; ++k) std::fill_n(grad.channel(k), static_cast<std::size_t>(last.h) * last.w, dlogit * hw[k] * inv_area);

    for (std::size_t l = layers; l-- > 0;) {
      const Tensor& z = t.pre[l];
      for (std::size_t i = 0; i < grad.v.size(); ++i)
        if (!(z.v[i] > 0.0)) grad.v[i] = 0.0;
      const Tensor& in = t.post[l];
      const std::size_t off = model.arch.conv_weight_offset(l);
      const std::size_t nw = model.conv_weights(l).size();
      std::span<double> gw(g.values.data() + off, nw);
      std::span<double> gb(g.values.data() + off + nw, static_cast<std::size_t>(model.arch.channels[l]));
      if (l > 0) {
        Tensor grad_in(in.c, in.h, in.w);
        detail::conv3x3_s2_backward(in, grad, model.conv_weights(l), gw, gb, &grad_in);
        grad = std::move(grad_in);
      } else {
        detail::conv3x3_s2_backward(in, grad, model.conv_weights(l), gw, gb, nullptr);
      }
    }
  }
  return g;
}

/// Mean per-sample BCE (forward only); used by finite-difference checks.
inline double batch_loss(const ComparatorModel& model, std::span<const Plane> inputs, std::span<const double> labels) {
  double loss = 0.0;
  for (std::size_t s = 0; s < inputs.size(); ++s) loss += bce(forward(model, inputs[s]), labels[s]);
  return loss / static_cast<double>(inputs.size());
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m, v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Throws on a non-finite gradient.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: params/grads size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::ostringstream msg;
      msg << "non-finite gradient at parameter " << i << " (step " << state.step + 1 << "): " << grads[i];
      throw TrainingDiverged(msg.str());
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidArgument("adam_step: optimizer state size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace prnu::neural
