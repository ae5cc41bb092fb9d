#include "advlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advlab/ops.hpp"
#include "advlab/rng.hpp"

namespace advlab {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool2: return "avgpool2";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "relu") return LayerKind::relu;
  if (name == "avgpool2") return LayerKind::avgpool2;
  if (name == "flatten") return LayerKind::flatten;
  throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::dense(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv(int out_channels, int kernel_size) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.out_channels = out_channels;
  s.kernel_size = kernel_size;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::relu}; }
LayerSpec LayerSpec::avgpool2() { return LayerSpec{LayerKind::avgpool2}; }
LayerSpec LayerSpec::flatten() { return LayerSpec{LayerKind::flatten}; }

namespace {

[[noreturn]] void bad_layer(std::size_t index, const std::string& why) {
  throw std::invalid_argument("layer " + std::to_string(index) + ": " + why);
}

}  // namespace

std::vector<std::vector<int>> layer_output_shapes(const ModelSpec& spec) {
  if (spec.input_shape.size() != 3) {
    throw std::invalid_argument("model input shape must be (C, H, W)");
  }
  if (spec.num_classes < 2) throw std::invalid_argument("model needs >= 2 classes");

  std::vector<std::vector<int>> shapes;
  std::vector<int> cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        if (cur.size() != 1) bad_layer(i, "dense expects a flattened input");
        if (cur[0] != l.in_features) {
          bad_layer(i, "dense in_features " + std::to_string(l.in_features) +
                           " does not match incoming " + std::to_string(cur[0]));
        }
        if (l.out_features < 1) bad_layer(i, "dense out_features must be positive");
        cur = {l.out_features};
        break;
      case LayerKind::conv2d:
        if (cur.size() != 3) bad_layer(i, "conv2d expects a (C, H, W) input");
        if (l.kernel_size < 1 || l.kernel_size % 2 == 0) {
          bad_layer(i, "conv2d kernel size must be odd and positive");
        }
        if (l.out_channels < 1) bad_layer(i, "conv2d out_channels must be positive");
        cur = {l.out_channels, cur[1], cur[2]};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::avgpool2:
        if (cur.size() != 3) bad_layer(i, "avgpool2 expects a (C, H, W) input");
        if (cur[1] % 2 != 0 || cur[2] % 2 != 0) {
          bad_layer(i, "avgpool2 requires even spatial dims");
        }
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::flatten: {
        int n = 1;
        for (int d : cur) n *= d;
        cur = {n};
        break;
      }
    }
    shapes.push_back(cur);
  }
  if (cur.size() != 1 || cur[0] != spec.num_classes) {
    throw std::invalid_argument("model output shape does not equal (num_classes)");
  }
  return shapes;
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "margin") return LossKind::margin;
  throw std::invalid_argument("unknown loss kind: " + name);
}

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::cross_entropy ? "cross_entropy" : "margin";
}

double loss_value(const Tensor& logits, int label, LossKind kind) {
  const int k = static_cast<int>(logits.size());
  if (label < 0 || label >= k) throw std::invalid_argument("loss: label out of range");
  if (kind == LossKind::cross_entropy) {
    double zmax = logits[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, logits[static_cast<std::size_t>(i)]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += std::exp(logits[static_cast<std::size_t>(i)] - zmax);
    return zmax + std::log(sum) - logits[static_cast<std::size_t>(label)];
  }
  // margin: max(0, max_{j != y} z_j - z_y + kappa)
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    if (i == label) continue;
    best = std::max(best, logits[static_cast<std::size_t>(i)]);
  }
  return std::max(0.0, best - logits[static_cast<std::size_t>(label)] + kMarginKappa);
}

Tensor loss_grad_logits(const Tensor& logits, int label, LossKind kind) {
  const int k = static_cast<int>(logits.size());
  if (label < 0 || label >= k) throw std::invalid_argument("loss: label out of range");
  Tensor g(logits.shape());
  if (kind == LossKind::cross_entropy) {
    // softmax(z) - one_hot(y)
    double zmax = logits[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, logits[static_cast<std::size_t>(i)]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += std::exp(logits[static_cast<std::size_t>(i)] - zmax);
    for (int i = 0; i < k; ++i) {
      g[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - zmax) / sum;
    }
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
  }
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    if (i == label) continue;
    if (logits[static_cast<std::size_t>(i)] > best_v) {
      best_v = logits[static_cast<std::size_t>(i)];
      best = i;
    }
  }
  const double value = best_v - logits[static_cast<std::size_t>(label)] + kMarginKappa;
  if (value > 0.0) {
    g[static_cast<std::size_t>(best)] = 1.0;
    g[static_cast<std::size_t>(label)] = -1.0;
  }
  return g;
}

Model::Model(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  shapes_ = layer_output_shapes(spec_);
  Rng rng(init_seed);
  std::vector<int> cur = spec_.input_shape;
  for (const LayerSpec& l : spec_.layers) {
    Tensor w, b;
    if (l.kind == LayerKind::dense) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_features));
      w = Tensor({l.out_features, l.in_features});
      b = Tensor({l.out_features});
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
      cur = {l.out_features};
    } else if (l.kind == LayerKind::conv2d) {
      const int in_c = cur[0];
      const double fan_in = static_cast<double>(in_c) * l.kernel_size * l.kernel_size;
      const double bound = 1.0 / std::sqrt(fan_in);
      w = Tensor({l.out_channels, in_c, l.kernel_size, l.kernel_size});
      b = Tensor({l.out_channels});
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
      cur = {l.out_channels, cur[1], cur[2]};
    } else if (l.kind == LayerKind::avgpool2) {
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
    } else if (l.kind == LayerKind::flatten) {
      int n = 1;
      for (int d : cur) n *= d;
      cur = {n};
    }
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

Model::Model(ModelSpec spec, std::vector<Tensor> weights, std::vector<Tensor> biases,
             ModelMetadata meta)
    : spec_(std::move(spec)),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      meta_(std::move(meta)) {
  shapes_ = layer_output_shapes(spec_);
  if (weights_.size() != spec_.layers.size() || biases_.size() != spec_.layers.size()) {
    throw std::invalid_argument("model: one weight/bias entry required per layer");
  }
  std::vector<int> cur = spec_.input_shape;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    if (l.kind == LayerKind::dense) {
      if (weights_[i].shape() != std::vector<int>{l.out_features, l.in_features} ||
          biases_[i].shape() != std::vector<int>{l.out_features}) {
        bad_layer(i, "dense parameter shapes do not match the spec");
      }
    } else if (l.kind == LayerKind::conv2d) {
      if (weights_[i].shape() != std::vector<int>{l.out_channels, cur[0], l.kernel_size,
                                                  l.kernel_size} ||
          biases_[i].shape() != std::vector<int>{l.out_channels}) {
        bad_layer(i, "conv2d parameter shapes do not match the spec");
      }
    } else if (!weights_[i].empty() || !biases_[i].empty()) {
      bad_layer(i, "parameter-free layer carries parameters");
    }
    if (!weights_[i].all_finite() || !biases_[i].all_finite()) {
      bad_layer(i, "parameters must be finite");
    }
    cur = shapes_[i];
  }
}

Tensor Model::layer_forward(std::size_t layer, const Tensor& in) const {
  const LayerSpec& l = spec_.layers[layer];
  switch (l.kind) {
    case LayerKind::dense: {
      const Tensor& w = weights_[layer];
      const Tensor& b = biases_[layer];
      Tensor out({l.out_features});
      for (int o = 0; o < l.out_features; ++o) {
        const double* wrow = w.data() + static_cast<std::size_t>(o) * l.in_features;
        double acc = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in_features; ++i) acc += wrow[i] * in[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = acc;
      }
      return out;
    }
    case LayerKind::conv2d: {
      Tensor out = conv2d(in, weights_[layer], Padding::same);
      const int oc = out.dim(0);
      const std::size_t plane = static_cast<std::size_t>(out.dim(1)) * out.dim(2);
      for (int ch = 0; ch < oc; ++ch) {
        const double b = biases_[layer][static_cast<std::size_t>(ch)];
        double* p = out.data() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b;
      }
      return out;
    }
    case LayerKind::relu: {
      Tensor out(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      return out;
    }
    case LayerKind::avgpool2: {
      const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
      Tensor out({c, h / 2, w / 2});
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h / 2; ++y) {
          for (int x = 0; x < w / 2; ++x) {
            out.at(ch, y, x) = 0.25 * (in.at(ch, 2 * y, 2 * x) + in.at(ch, 2 * y, 2 * x + 1) +
                                       in.at(ch, 2 * y + 1, 2 * x) +
                                       in.at(ch, 2 * y + 1, 2 * x + 1));
          }
        }
      }
      return out;
    }
    case LayerKind::flatten:
      return in.reshaped({static_cast<int>(in.size())});
  }
  throw std::logic_error("unreachable layer kind");
}

Tensor Model::forward(const Tensor& x) const {
  if (x.shape() != spec_.input_shape) {
    throw std::invalid_argument("forward: input shape does not match the model");
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) cur = layer_forward(i, cur);
  return cur;
}

int Model::predict(const Tensor& x) const {
  const Tensor logits = forward(x);
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

Tensor Model::layer_backward(std::size_t layer, const Tensor& in, const Tensor& dout,
                             ParamGrads* param_grads) const {
  const LayerSpec& l = spec_.layers[layer];
  switch (l.kind) {
    case LayerKind::dense: {
      const Tensor& w = weights_[layer];
      Tensor din({l.in_features});
      for (int o = 0; o < l.out_features; ++o) {
        const double g = dout[static_cast<std::size_t>(o)];
        const double* wrow = w.data() + static_cast<std::size_t>(o) * l.in_features;
        for (int i = 0; i < l.in_features; ++i) din[static_cast<std::size_t>(i)] += g * wrow[i];
      }
      if (param_grads) {
        Tensor& dw = param_grads->weights[layer];
        Tensor& db = param_grads->biases[layer];
        for (int o = 0; o < l.out_features; ++o) {
          const double g = dout[static_cast<std::size_t>(o)];
          double* dwrow = dw.data() + static_cast<std::size_t>(o) * l.in_features;
          for (int i = 0; i < l.in_features; ++i) dwrow[i] += g * in[static_cast<std::size_t>(i)];
          db[static_cast<std::size_t>(o)] += g;
        }
      }
      return din;
    }
    case LayerKind::conv2d: {
      const Tensor& w = weights_[layer];
      const int oc = w.dim(0), ic = w.dim(1), k = w.dim(2);
      const int h = in.dim(1), wd = in.dim(2);
      const int pad = k / 2;
      Tensor din(in.shape());
      for (int o = 0; o < oc; ++o) {
        for (int oy = 0; oy < h; ++oy) {
          for (int ox = 0; ox < wd; ++ox) {
            const double g = dout.at(o, oy, ox);
            if (g == 0.0) continue;
            for (int ci = 0; ci < ic; ++ci) {
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox + kx - pad;
                  if (ix < 0 || ix >= wd) continue;
                  din.at(ci, iy, ix) +=
                      g * w[((static_cast<std::size_t>(o) * ic + ci) * k + ky) * k + kx];
                }
              }
            }
          }
        }
      }
      if (param_grads) {
        Tensor& dw = param_grads->weights[layer];
        Tensor& db = param_grads->biases[layer];
        for (int o = 0; o < oc; ++o) {
          double gsum = 0.0;
          for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < wd; ++ox) {
              const double g = dout.at(o, oy, ox);
              gsum += g;
              if (g == 0.0) continue;
              for (int ci = 0; ci < ic; ++ci) {
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = oy + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    dw[((static_cast<std::size_t>(o) * ic + ci) * k + ky) * k + kx] +=
                        g * in.at(ci, iy, ix);
                  }
                }
              }
            }
          }
          db[static_cast<std::size_t>(o)] += gsum;
        }
      }
      return din;
    }
    case LayerKind::relu: {
      Tensor din(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
      return din;
    }
    case LayerKind::avgpool2: {
      const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
      Tensor din(in.shape());
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h / 2; ++y) {
          for (int x = 0; x < w / 2; ++x) {
            const double g = 0.25 * dout.at(ch, y, x);
            din.at(ch, 2 * y, 2 * x) = g;
            din.at(ch, 2 * y, 2 * x + 1) = g;
            din.at(ch, 2 * y + 1, 2 * x) = g;
            din.at(ch, 2 * y + 1, 2 * x + 1) = g;
          }
        }
      }
      return din;
    }
    case LayerKind::flatten:
      return dout.reshaped(in.shape());
  }
  throw std::logic_error("unreachable layer kind");
}

Model::ParamGrads Model::zero_param_grads() const {
  ParamGrads pg;
  pg.weights.reserve(weights_.size());
  pg.biases.reserve(biases_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    pg.weights.push_back(weights_[i].empty() ? Tensor() : Tensor(weights_[i].shape()));
    pg.biases.push_back(biases_[i].empty() ? Tensor() : Tensor(biases_[i].shape()));
  }
  return pg;
}

Model::ForwardTrace Model::forward_trace(const Tensor& x) const {
  if (x.shape() != spec_.input_shape) {
    throw std::invalid_argument("forward_trace: input shape does not match the model");
  }
  ForwardTrace trace;
  trace.activations.reserve(spec_.layers.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    trace.activations.push_back(layer_forward(i, trace.activations.back()));
  }
  return trace;
}

Tensor Model::backward_input(const ForwardTrace& trace, const Tensor& logit_grad) const {
  if (trace.activations.size() != spec_.layers.size() + 1) {
    throw std::invalid_argument("backward_input: trace does not match the model");
  }
  require_same_shape(trace.logits(), logit_grad, "backward_input");
  Tensor d = logit_grad;
  for (std::size_t i = spec_.layers.size(); i-- > 0;) {
    d = layer_backward(i, trace.activations[i], d, nullptr);
  }
  return d;
}

double Model::backward(const Tensor& x, int label, LossKind loss, Tensor* input_grad,
                       ParamGrads* param_grads) const {
  if (label < 0 || label >= spec_.num_classes) {
    throw std::invalid_argument("backward: label out of range");
  }
  const ForwardTrace trace = forward_trace(x);
  const Tensor& logits = trace.logits();
  const double value = loss_value(logits, label, loss);

  Tensor d = loss_grad_logits(logits, label, loss);
  for (std::size_t i = spec_.layers.size(); i-- > 0;) {
    d = layer_backward(i, trace.activations[i], d, param_grads);
  }
  if (input_grad) *input_grad = std::move(d);
  return value;
}

Model::LossAndGrad Model::loss_and_input_grad(const Tensor& x, int label, LossKind loss) const {
  LossAndGrad out;
  out.loss = backward(x, label, loss, &out.input_grad, nullptr);
  return out;
}

void Model::apply_gradients(const ParamGrads& grads, double lr) {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i].empty()) continue;
    Tensor& w = weights_[i];
    const Tensor& dw = grads.weights[i];
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * dw[j];
    Tensor& b = biases_[i];
    const Tensor& db = grads.biases[i];
    for (std::size_t j = 0; j < b.size(); ++j) b[j] -= lr * db[j];
  }
}

Tensor finite_diff_grad(const Model& model, const Tensor& x, int label, LossKind loss,
                        double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss_value(model.forward(probe), label, loss);
    probe[i] = orig - h;
    const double down = loss_value(model.forward(probe), label, loss);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace advlab
