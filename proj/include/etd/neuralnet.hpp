#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "etd/preprocess.hpp"
#include "etd/rng.hpp"
#include "etd/tensor.hpp"

// A 1-D CNN built directly on Tensor: valid cross-correlation convolutions,
// max pooling, dense head, reverse-mode gradients, SGD/Adam, and a
// central-difference gradient checker. Everything is double precision and
// deterministic given the seeds.

namespace etd {

enum class Activation : std::uint8_t { Linear = 0, ReLU = 1, Sigmoid = 2 };

// Keeps the head's output an open-interval probability even where the fp
// exponential saturates.
inline constexpr double kProbaMargin = 1e-15;

inline double activate(double z, Activation a) {
  switch (a) {
    case Activation::Linear:
      return z;
    case Activation::ReLU:
      return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return std::clamp(s, kProbaMargin, 1.0 - kProbaMargin);
    }
  }
  throw std::logic_error("neuralnet: unknown activation");
}

// Derivative w.r.t. the pre-activation, expressed through the activated value.
inline double activation_grad(double out, Activation a) {
  switch (a) {
    case Activation::Linear:
      return 1.0;
    case Activation::ReLU:
      return out > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid:
      return out * (1.0 - out);
  }
  throw std::logic_error("neuralnet: unknown activation");
}

inline void apply_activation(Tensor& t, Activation a) {
  if (a == Activation::Linear) return;
  for (double& v : t.data) v = activate(v, a);
}

struct Conv1DSpec {
  std::size_t filters = 1;
  std::size_t kernel = 1;
  Activation activation = Activation::ReLU;
  bool operator==(const Conv1DSpec&) const = default;
};
struct MaxPool1DSpec {
  std::size_t pool = 2;
  bool operator==(const MaxPool1DSpec&) const = default;
};
struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};
struct DenseSpec {
  std::size_t units = 1;
  Activation activation = Activation::ReLU;
  bool operator==(const DenseSpec&) const = default;
};
using LayerSpec = std::variant<Conv1DSpec, MaxPool1DSpec, FlattenSpec, DenseSpec>;

inline const char* layer_name(const LayerSpec& spec) {
  if (std::holds_alternative<Conv1DSpec>(spec)) return "conv1d";
  if (std::holds_alternative<MaxPool1DSpec>(spec)) return "maxpool1d";
  if (std::holds_alternative<FlattenSpec>(spec)) return "flatten";
  return "dense";
}

inline std::vector<LayerSpec> default_architecture() {
  return {Conv1DSpec{32, 7, Activation::ReLU}, MaxPool1DSpec{2},
          Conv1DSpec{16, 3, Activation::ReLU}, MaxPool1DSpec{2},
          FlattenSpec{},
          DenseSpec{64, Activation::ReLU},     DenseSpec{1, Activation::Sigmoid}};
}

struct LayerParams {
  Tensor w;
  Tensor b;
  bool operator==(const LayerParams&) const = default;
};

// --- stateless layer math (pre-activation) ---

// Valid cross-correlation: x (N,T,C) * w (K,C,F) + b (F) -> (N, T-K+1, F).
inline Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1) {
    throw std::invalid_argument("neuralnet: conv1d expects x (N,T,C), w (K,C,F), b (F)");
  }
  const std::size_t n = x.dim(0), t_in = x.dim(1), c_in = x.dim(2);
  const std::size_t k = w.dim(0), f = w.dim(2);
  if (w.dim(1) != c_in) throw std::invalid_argument("neuralnet: conv1d channel mismatch");
  if (b.dim(0) != f) throw std::invalid_argument("neuralnet: conv1d bias size mismatch");
  if (t_in < k) {
    throw std::invalid_argument("neuralnet: conv1d input length " + std::to_string(t_in) +
                                " shorter than kernel " + std::to_string(k));
  }
  const std::size_t t_out = t_in - k + 1;
  Tensor out({n, t_out, f});
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t t = 0; t < t_out; ++t) {
      double* o = &out.data[(ni * t_out + t) * f];
      for (std::size_t fi = 0; fi < f; ++fi) o[fi] = b.data[fi];
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double xv = x.data[(ni * t_in + t + ki) * c_in + ci];
          const double* wr = &w.data[(ki * c_in + ci) * f];
          for (std::size_t fi = 0; fi < f; ++fi) o[fi] += xv * wr[fi];
        }
      }
    }
  }
  return out;
}

// Non-overlapping max windows; a trailing remainder of T mod pool is dropped.
// When argmax is given it receives, per output element, the flat index of the
// winning input element (ties break to the lowest index).
inline Tensor maxpool1d_forward(const Tensor& x, std::size_t pool,
                                std::vector<std::size_t>* argmax = nullptr) {
  if (x.rank() != 3) throw std::invalid_argument("neuralnet: maxpool1d expects x (N,T,F)");
  if (pool == 0) throw std::invalid_argument("neuralnet: pool size must be >= 1");
  const std::size_t n = x.dim(0), t_in = x.dim(1), f = x.dim(2);
  if (t_in < pool) {
    throw std::invalid_argument("neuralnet: maxpool1d pool " + std::to_string(pool) +
                                " larger than input length " + std::to_string(t_in));
  }
  const std::size_t t_out = t_in / pool;
  Tensor out({n, t_out, f});
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t fi = 0; fi < f; ++fi) {
        std::size_t best = (ni * t_in + t * pool) * f + fi;
        double best_v = x.data[best];
        for (std::size_t p = 1; p < pool; ++p) {
          const std::size_t idx = (ni * t_in + t * pool + p) * f + fi;
          if (x.data[idx] > best_v) {
            best_v = x.data[idx];
            best = idx;
          }
        }
        const std::size_t oi = (ni * t_out + t) * f + fi;
        out.data[oi] = best_v;
        if (argmax) (*argmax)[oi] = best;
      }
    }
  }
  return out;
}

// Affine map: x (N,D) * w (D,U) + b (U) -> (N,U).
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
    throw std::invalid_argument("neuralnet: dense expects x (N,D), w (D,U), b (U)");
  }
  const std::size_t n = x.dim(0), d = x.dim(1), u = w.dim(1);
  if (w.dim(0) != d || b.dim(0) != u) throw std::invalid_argument("neuralnet: dense shape mismatch");
  Tensor out({n, u});
  for (std::size_t ni = 0; ni < n; ++ni) {
    double* o = &out.data[ni * u];
    for (std::size_t ui = 0; ui < u; ++ui) o[ui] = b.data[ui];
    for (std::size_t di = 0; di < d; ++di) {
      const double xv = x.data[ni * d + di];
      const double* wr = &w.data[di * u];
      for (std::size_t ui = 0; ui < u; ++ui) o[ui] += xv * wr[ui];
    }
  }
  return out;
}

// Mean binary cross-entropy with probabilities clipped to [eps, 1-eps].
inline constexpr double kBceEps = 1e-12;

inline double bce_loss(const Tensor& p, std::span<const double> y) {
  if (p.rank() != 2 || p.dim(1) != 1 || p.dim(0) != y.size()) {
    throw std::invalid_argument("neuralnet: bce_loss expects p (N,1) with matching labels");
  }
  if (y.empty()) throw std::invalid_argument("neuralnet: bce_loss on empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double pi = std::clamp(p.data[i], kBceEps, 1.0 - kBceEps);
    sum -= y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi);
  }
  return sum / static_cast<double>(y.size());
}

// --- model ---

class Model {
 public:
  Model() = default;

  // Builds parameter tensors for `input_length` timesteps of a single input
  // channel and initializes weights from `seed`: He-uniform ahead of ReLU,
  // Glorot-uniform otherwise, zero biases.
  Model(std::vector<LayerSpec> specs, std::size_t input_length, std::uint64_t seed)
      : specs_(std::move(specs)), input_length_(input_length), seed_(seed) {
    const auto shapes = plan_shapes();
    rng::Engine eng(seed_);
    params_.resize(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (shapes[i].w_shape.empty()) continue;
      params_[i].w = Tensor(shapes[i].w_shape);
      params_[i].b = Tensor(shapes[i].b_shape);
      const double limit = shapes[i].relu
                               ? std::sqrt(6.0 / static_cast<double>(shapes[i].fan_in))
                               : std::sqrt(6.0 / static_cast<double>(shapes[i].fan_in + shapes[i].fan_out));
      for (double& v : params_[i].w.data) v = eng.uniform(-limit, limit);
    }
  }

  // Wraps already-learned parameters (the deserialization path).
  Model(std::vector<LayerSpec> specs, std::size_t input_length, std::uint64_t seed,
        std::vector<LayerParams> params)
      : specs_(std::move(specs)), params_(std::move(params)), input_length_(input_length), seed_(seed) {
    const auto shapes = plan_shapes();
    if (params_.size() != specs_.size()) {
      throw std::invalid_argument("neuralnet: layer/parameter count mismatch");
    }
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (params_[i].w.shape != shapes[i].w_shape || params_[i].b.shape != shapes[i].b_shape) {
        throw std::invalid_argument("neuralnet: parameter shapes do not match layer " +
                                    std::to_string(i) + " (" + layer_name(specs_[i]) + ")");
      }
    }
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }
  std::size_t input_length() const { return input_length_; }
  std::uint64_t rng_seed() const { return seed_; }

  // Width of the flattened vector entering the dense head.
  std::size_t head_input_size() const { return head_input_size_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.w.size() + p.b.size();
    return n;
  }

  struct Cache {
    // outputs[i] is layer i's post-activation output; layer i's input is
    // outputs[i-1] (the batch itself for i = 0).
    std::vector<Tensor> outputs;
    std::vector<std::vector<std::size_t>> pool_argmax;
  };

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const {
    if (x.rank() != 3 || x.dim(1) != input_length_ || x.dim(2) != 1) {
      throw std::invalid_argument("neuralnet: input must be (N," + std::to_string(input_length_) +
                                  ",1)");
    }
    x.check_finite("model input");
    if (cache) {
      cache->outputs.clear();
      cache->outputs.reserve(specs_.size());
      cache->pool_argmax.assign(specs_.size(), {});
    }
    Tensor scratch;
    const Tensor* cur = &x;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      Tensor next;
      if (const auto* conv = std::get_if<Conv1DSpec>(&specs_[i])) {
        next = conv1d_forward(*cur, params_[i].w, params_[i].b);
        apply_activation(next, conv->activation);
      } else if (const auto* pool = std::get_if<MaxPool1DSpec>(&specs_[i])) {
        next = maxpool1d_forward(*cur, pool->pool, cache ? &cache->pool_argmax[i] : nullptr);
      } else if (std::holds_alternative<FlattenSpec>(specs_[i])) {
        next = *cur;
        next.shape = {cur->dim(0), cur->dim(1) * cur->dim(2)};
      } else {
        const auto& dense = std::get<DenseSpec>(specs_[i]);
        next = dense_forward(*cur, params_[i].w, params_[i].b);
        apply_activation(next, dense.activation);
      }
      next.check_finite("layer " + std::to_string(i) + " (" + layer_name(specs_[i]) + ") output");
      if (cache) {
        cache->outputs.push_back(std::move(next));
        cur = &cache->outputs.back();
      } else {
        scratch = std::move(next);
        cur = &scratch;
      }
    }
    return *cur;
  }

  bool operator==(const Model&) const = default;

 private:
  struct PlannedLayer {
    std::vector<std::size_t> w_shape;  // empty for parameterless layers
    std::vector<std::size_t> b_shape;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    bool relu = false;
  };

  // Walks the spec list, deriving every layer's parameter shapes and
  // validating the shape algebra against input_length_.
  std::vector<PlannedLayer> plan_shapes() {
    if (specs_.empty()) throw std::invalid_argument("neuralnet: empty layer list");
    if (input_length_ == 0) throw std::invalid_argument("neuralnet: input length must be >= 1");
    std::vector<PlannedLayer> out(specs_.size());
    std::size_t length = input_length_, channels = 1;
    bool flat = false;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const std::string at = "layer " + std::to_string(i);
      if (const auto* conv = std::get_if<Conv1DSpec>(&specs_[i])) {
        if (flat) throw std::invalid_argument("neuralnet: " + at + ": conv1d after flatten");
        if (conv->filters == 0 || conv->kernel == 0) {
          throw std::invalid_argument("neuralnet: " + at + ": filters and kernel must be >= 1");
        }
        if (length < conv->kernel) {
          throw std::invalid_argument("neuralnet: " + at + ": kernel " + std::to_string(conv->kernel) +
                                      " exceeds input length " + std::to_string(length));
        }
        out[i].w_shape = {conv->kernel, channels, conv->filters};
        out[i].b_shape = {conv->filters};
        out[i].fan_in = conv->kernel * channels;
        out[i].fan_out = conv->kernel * conv->filters;
        out[i].relu = conv->activation == Activation::ReLU;
        length = length - conv->kernel + 1;
        channels = conv->filters;
      } else if (const auto* pool = std::get_if<MaxPool1DSpec>(&specs_[i])) {
        if (flat) throw std::invalid_argument("neuralnet: " + at + ": maxpool1d after flatten");
        if (pool->pool == 0) throw std::invalid_argument("neuralnet: " + at + ": pool must be >= 1");
        if (length < pool->pool) {
          throw std::invalid_argument("neuralnet: " + at + ": pool " + std::to_string(pool->pool) +
                                      " exceeds input length " + std::to_string(length));
        }
        length = length / pool->pool;
      } else if (std::holds_alternative<FlattenSpec>(specs_[i])) {
        if (flat) throw std::invalid_argument("neuralnet: " + at + ": flatten after flatten");
        flat = true;
        length = length * channels;
        channels = 1;
        head_input_size_ = length;
      } else {
        const auto& dense = std::get<DenseSpec>(specs_[i]);
        if (!flat) throw std::invalid_argument("neuralnet: " + at + ": dense requires flatten first");
        if (dense.units == 0) throw std::invalid_argument("neuralnet: " + at + ": units must be >= 1");
        out[i].w_shape = {length, dense.units};
        out[i].b_shape = {dense.units};
        out[i].fan_in = length;
        out[i].fan_out = dense.units;
        out[i].relu = dense.activation == Activation::ReLU;
        length = dense.units;
      }
    }
    const auto* head = std::get_if<DenseSpec>(&specs_.back());
    if (!head || head->units != 1 || head->activation != Activation::Sigmoid) {
      throw std::invalid_argument("neuralnet: final layer must be Dense{1, Sigmoid}");
    }
    return out;
  }

  std::vector<LayerSpec> specs_;
  std::vector<LayerParams> params_;
  std::size_t input_length_ = 0;
  std::size_t head_input_size_ = 0;
  std::uint64_t seed_ = 0;
};

inline Tensor predict_proba(const Model& model, const Tensor& x) { return model.forward(x); }

// --- reverse-mode gradients ---

struct BackwardResult {
  double loss = 0.0;
  Tensor proba;
  std::vector<LayerParams> grads;  // same shapes as the model parameters
};

// Exact gradients of the mean BCE w.r.t. every parameter. The head gradient
// uses the fused BCE-through-sigmoid form (p - y)/N, which the mandatory
// sigmoid head makes valid and numerically stable.
inline BackwardResult backward(const Model& model, const Tensor& x, std::span<const double> y) {
  if (x.dim(0) != y.size()) throw std::invalid_argument("neuralnet: batch/label size mismatch");
  Model::Cache cache;
  BackwardResult res;
  res.proba = model.forward(x, &cache);
  res.loss = bce_loss(res.proba, y);

  const auto& specs = model.specs();
  const auto& params = model.params();
  const std::size_t n = x.dim(0);
  res.grads.resize(specs.size());

  // Gradient w.r.t. the last layer's pre-activation.
  Tensor d = res.proba;
  for (std::size_t i = 0; i < n; ++i) d.data[i] = (d.data[i] - y[i]) / static_cast<double>(n);
  bool d_is_preactivation = true;

  for (std::size_t li = specs.size(); li-- > 0;) {
    const Tensor& in = (li == 0) ? x : cache.outputs[li - 1];
    const Tensor& out = cache.outputs[li];
    if (const auto* dense = std::get_if<DenseSpec>(&specs[li])) {
      Tensor dz = std::move(d);
      if (!d_is_preactivation) {
        for (std::size_t j = 0; j < dz.size(); ++j) {
          dz.data[j] *= activation_grad(out.data[j], dense->activation);
        }
      }
      const std::size_t din = in.dim(1), u = dense->units;
      auto& g = res.grads[li];
      g.w = Tensor({din, u});
      g.b = Tensor({u});
      for (std::size_t ni = 0; ni < n; ++ni) {
        const double* dzr = &dz.data[ni * u];
        for (std::size_t ui = 0; ui < u; ++ui) g.b.data[ui] += dzr[ui];
        for (std::size_t di = 0; di < din; ++di) {
          const double xv = in.data[ni * din + di];
          double* gw = &g.w.data[di * u];
          for (std::size_t ui = 0; ui < u; ++ui) gw[ui] += xv * dzr[ui];
        }
      }
      Tensor dx({n, din});
      for (std::size_t ni = 0; ni < n; ++ni) {
        const double* dzr = &dz.data[ni * u];
        double* dxr = &dx.data[ni * din];
        for (std::size_t di = 0; di < din; ++di) {
          const double* wr = &params[li].w.data[di * u];
          double acc = 0.0;
          for (std::size_t ui = 0; ui < u; ++ui) acc += wr[ui] * dzr[ui];
          dxr[di] = acc;
        }
      }
      d = std::move(dx);
    } else if (std::holds_alternative<FlattenSpec>(specs[li])) {
      d.shape = in.shape;
    } else if (std::holds_alternative<MaxPool1DSpec>(specs[li])) {
      Tensor dx(in.shape);
      const auto& argmax = cache.pool_argmax[li];
      for (std::size_t j = 0; j < d.size(); ++j) dx.data[argmax[j]] += d.data[j];
      d = std::move(dx);
    } else {
      const auto& conv = std::get<Conv1DSpec>(specs[li]);
      Tensor dz = std::move(d);
      for (std::size_t j = 0; j < dz.size(); ++j) {
        dz.data[j] *= activation_grad(out.data[j], conv.activation);
      }
      const std::size_t t_in = in.dim(1), c_in = in.dim(2);
      const std::size_t k = conv.kernel, f = conv.filters;
      const std::size_t t_out = t_in - k + 1;
      auto& g = res.grads[li];
      g.w = Tensor({k, c_in, f});
      g.b = Tensor({f});
      Tensor dx({n, t_in, c_in});
      for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t t = 0; t < t_out; ++t) {
          const double* dzr = &dz.data[(ni * t_out + t) * f];
          for (std::size_t fi = 0; fi < f; ++fi) g.b.data[fi] += dzr[fi];
          for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              const std::size_t xi = (ni * t_in + t + ki) * c_in + ci;
              const double xv = in.data[xi];
              double* gw = &g.w.data[(ki * c_in + ci) * f];
              const double* wr = &params[li].w.data[(ki * c_in + ci) * f];
              double acc = 0.0;
              for (std::size_t fi = 0; fi < f; ++fi) {
                gw[fi] += xv * dzr[fi];
                acc += wr[fi] * dzr[fi];
              }
              dx.data[xi] += acc;
            }
          }
        }
      }
      d = std::move(dx);
    }
    d_is_preactivation = false;
    if (!res.grads[li].w.data.empty()) {
      res.grads[li].w.check_finite("layer " + std::to_string(li) + " (" + layer_name(specs[li]) +
                                   ") weight gradient");
      res.grads[li].b.check_finite("layer " + std::to_string(li) + " (" + layer_name(specs[li]) +
                                   ") bias gradient");
    }
  }
  return res;
}

// Central-difference verification; returns the max relative error
// |ga - gn| / max(1e-8, |ga| + |gn|) over all parameters. Intended for small
// models (on the order of <= 2000 parameters).
inline double gradient_check(Model& model, const Tensor& x, std::span<const double> y,
                             double h = 1e-5) {
  const auto analytic = backward(model, x, y).grads;
  double max_rel = 0.0;
  const auto loss_at = [&] { return bce_loss(model.forward(x), y); };
  for (std::size_t li = 0; li < model.params().size(); ++li) {
    for (Tensor* t : {&model.params()[li].w, &model.params()[li].b}) {
      const Tensor& ga = (t == &model.params()[li].w) ? analytic[li].w : analytic[li].b;
      for (std::size_t j = 0; j < t->size(); ++j) {
        const double orig = t->data[j];
        t->data[j] = orig + h;
        const double lp = loss_at();
        t->data[j] = orig - h;
        const double lm = loss_at();
        t->data[j] = orig;
        const double gn = (lp - lm) / (2.0 * h);
        const double rel = std::abs(ga.data[j] - gn) / std::max(1e-8, std::abs(ga.data[j]) + std::abs(gn));
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

// --- training ---

enum class OptimizerKind : std::uint8_t { SGD = 0, Adam = 1 };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("neuralnet: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("neuralnet: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("neuralnet: learning rate must be > 0");
  }
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;  // history[e] is epoch e+1
};

// Batches `series` into the network input layout (N, T, 1) plus a 0/1 label
// vector (1 = theft).
struct BatchData {
  Tensor x;
  std::vector<double> labels;
};

inline BatchData reshape_3d(std::span<const ProcessedSeries> series) {
  BatchData out;
  const std::size_t n = series.size();
  const std::size_t t = n == 0 ? 0 : series.front().values.size();
  out.x = Tensor({n, t, 1});
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (series[i].values.size() != t) {
      throw std::invalid_argument("neuralnet: ragged series lengths (" + std::to_string(t) + " vs " +
                                  std::to_string(series[i].values.size()) + " at '" +
                                  series[i].consumer_id + "')");
    }
    std::copy(series[i].values.begin(), series[i].values.end(), out.x.data.begin() + i * t);
    out.labels.push_back(series[i].label == Label::Theft ? 1.0 : 0.0);
  }
  return out;
}

namespace detail {

struct AdamState {
  std::vector<LayerParams> m;
  std::vector<LayerParams> v;
  std::size_t t = 0;
};

inline void optimizer_step(Model& model, const std::vector<LayerParams>& grads,
                           const TrainConfig& cfg, AdamState& adam) {
  auto& params = model.params();
  if (cfg.optimizer == OptimizerKind::SGD) {
    for (std::size_t li = 0; li < params.size(); ++li) {
      for (std::size_t j = 0; j < params[li].w.size(); ++j) {
        params[li].w.data[j] -= cfg.learning_rate * grads[li].w.data[j];
      }
      for (std::size_t j = 0; j < params[li].b.size(); ++j) {
        params[li].b.data[j] -= cfg.learning_rate * grads[li].b.data[j];
      }
    }
    return;
  }
  if (adam.m.empty()) {
    adam.m.resize(params.size());
    adam.v.resize(params.size());
    for (std::size_t li = 0; li < params.size(); ++li) {
      adam.m[li].w = Tensor(params[li].w.shape);
      adam.m[li].b = Tensor(params[li].b.shape);
      adam.v[li].w = Tensor(params[li].w.shape);
      adam.v[li].b = Tensor(params[li].b.shape);
    }
  }
  adam.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
  const auto update = [&](Tensor& theta, Tensor& m, Tensor& v, const Tensor& g) {
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m.data[j] = cfg.adam_beta1 * m.data[j] + (1.0 - cfg.adam_beta1) * g.data[j];
      v.data[j] = cfg.adam_beta2 * v.data[j] + (1.0 - cfg.adam_beta2) * g.data[j] * g.data[j];
      theta.data[j] -= cfg.learning_rate * (m.data[j] / bc1) / (std::sqrt(v.data[j] / bc2) + cfg.adam_epsilon);
    }
  };
  for (std::size_t li = 0; li < params.size(); ++li) {
    if (params[li].w.data.empty()) continue;
    update(params[li].w, adam.m[li].w, adam.v[li].w, grads[li].w);
    update(params[li].b, adam.m[li].b, adam.v[li].b, grads[li].b);
  }
}

}  // namespace detail

// Mini-batch training, fully deterministic given (spec, data, init_seed,
// cfg.shuffle_seed). Per-epoch loss is the mean per-sample BCE over the
// epoch; accuracy thresholds the probabilities at 0.5.
inline TrainResult train(const std::vector<LayerSpec>& spec, const Tensor& x,
                         std::span<const double> y, const TrainConfig& cfg,
                         std::uint64_t init_seed) {
  cfg.validate();
  const std::size_t n = x.dim(0);
  if (n == 0) throw std::invalid_argument("neuralnet: cannot train on an empty batch");
  if (y.size() != n) throw std::invalid_argument("neuralnet: batch/label size mismatch");

  TrainResult result;
  result.model = Model(spec, x.dim(1), init_seed);
  detail::AdamState adam;
  rng::Engine shuffler(cfg.shuffle_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t row = x.dim(1) * x.dim(2);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, n - start);
      Tensor xb({nb, x.dim(1), x.dim(2)});
      std::vector<double> yb(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const std::size_t src = order[start + i];
        std::copy(x.data.begin() + src * row, x.data.begin() + (src + 1) * row,
                  xb.data.begin() + i * row);
        yb[i] = y[src];
      }
      BackwardResult res;
      try {
        res = backward(result.model, xb, yb);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("neuralnet: training diverged (" + std::string(e.what()) +
                                 "); try a lower learning rate");
      }
      if (!std::isfinite(res.loss)) {
        throw std::runtime_error("neuralnet: training diverged (loss is not finite); try a lower learning rate");
      }
      loss_sum += res.loss * static_cast<double>(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const double pred = res.proba.data[i] > 0.5 ? 1.0 : 0.0;
        if (pred == yb[i]) ++correct;
      }
      detail::optimizer_step(result.model, res.grads, cfg, adam);
    }
    result.history.push_back(
        {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  return result;
}

// --- serialization ---
// Versioned flat binary layout: magic, version, seed, input length, the spec
// list, then every parameter tensor as little-endian 64-bit reals.

inline constexpr char kModelMagic[4] = {'E', 'T', 'D', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::uint8_t buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(out, buf, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  std::uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(out, buf, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw std::runtime_error("neuralnet: truncated model file");
  }
}

inline std::uint8_t get_u8(std::istream& in) {
  std::uint8_t v;
  get_bytes(in, &v, 1);
  return v;
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint8_t buf[4];
  get_bytes(in, buf, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  std::uint8_t buf[8];
  get_bytes(in, buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void put_tensor(std::ostream& out, const Tensor& t) {
  put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape) put_u64(out, d);
  for (double v : t.data) put_f64(out, v);
}

inline Tensor get_tensor(std::istream& in) {
  const std::uint8_t rank = get_u8(in);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_u64(in));
  std::vector<double> data(Tensor::element_count(shape));
  for (auto& v : data) v = get_f64(in);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace detail

inline void save_model(const Model& model, std::ostream& out) {
  detail::put_bytes(out, kModelMagic, 4);
  detail::put_u32(out, kModelFormatVersion);
  detail::put_u64(out, model.rng_seed());
  detail::put_u64(out, model.input_length());
  detail::put_u32(out, static_cast<std::uint32_t>(model.specs().size()));
  for (const auto& spec : model.specs()) {
    if (const auto* conv = std::get_if<Conv1DSpec>(&spec)) {
      detail::put_u8(out, 0);
      detail::put_u64(out, conv->filters);
      detail::put_u64(out, conv->kernel);
      detail::put_u8(out, static_cast<std::uint8_t>(conv->activation));
    } else if (const auto* pool = std::get_if<MaxPool1DSpec>(&spec)) {
      detail::put_u8(out, 1);
      detail::put_u64(out, pool->pool);
    } else if (std::holds_alternative<FlattenSpec>(spec)) {
      detail::put_u8(out, 2);
    } else {
      const auto& dense = std::get<DenseSpec>(spec);
      detail::put_u8(out, 3);
      detail::put_u64(out, dense.units);
      detail::put_u8(out, static_cast<std::uint8_t>(dense.activation));
    }
  }
  for (const auto& p : model.params()) {
    if (p.w.data.empty()) continue;
    detail::put_tensor(out, p.w);
    detail::put_tensor(out, p.b);
  }
  if (!out) throw std::runtime_error("neuralnet: model write failed");
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("neuralnet: cannot write '" + path.string() + "'");
  save_model(model, out);
}

inline Activation activation_from_u8(std::uint8_t v) {
  if (v > 2) throw std::runtime_error("neuralnet: unknown activation tag in model file");
  return static_cast<Activation>(v);
}

inline Model load_model(std::istream& in) {
  char magic[4];
  detail::get_bytes(in, magic, 4);
  if (!std::equal(magic, magic + 4, kModelMagic)) {
    throw std::runtime_error("neuralnet: not a model file (bad magic)");
  }
  const std::uint32_t version = detail::get_u32(in);
  if (version != kModelFormatVersion) {
    throw std::runtime_error("neuralnet: unsupported model format version " + std::to_string(version) +
                             " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint64_t seed = detail::get_u64(in);
  const auto input_length = static_cast<std::size_t>(detail::get_u64(in));
  const std::uint32_t n_layers = detail::get_u32(in);
  std::vector<LayerSpec> specs;
  specs.reserve(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    switch (detail::get_u8(in)) {
      case 0: {
        Conv1DSpec conv;
        conv.filters = static_cast<std::size_t>(detail::get_u64(in));
        conv.kernel = static_cast<std::size_t>(detail::get_u64(in));
        conv.activation = activation_from_u8(detail::get_u8(in));
        specs.emplace_back(conv);
        break;
      }
      case 1:
        specs.emplace_back(MaxPool1DSpec{static_cast<std::size_t>(detail::get_u64(in))});
        break;
      case 2:
        specs.emplace_back(FlattenSpec{});
        break;
      case 3: {
        DenseSpec dense;
        dense.units = static_cast<std::size_t>(detail::get_u64(in));
        dense.activation = activation_from_u8(detail::get_u8(in));
        specs.emplace_back(dense);
        break;
      }
      default:
        throw std::runtime_error("neuralnet: unknown layer tag in model file");
    }
  }
  std::vector<LayerParams> params(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (std::holds_alternative<MaxPool1DSpec>(specs[i]) ||
        std::holds_alternative<FlattenSpec>(specs[i])) {
      continue;
    }
    params[i].w = detail::get_tensor(in);
    params[i].b = detail::get_tensor(in);
  }
  return Model(std::move(specs), input_length, seed, std::move(params));
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("neuralnet: cannot open '" + path.string() + "'");
  return load_model(in);
}

}  // namespace etd
