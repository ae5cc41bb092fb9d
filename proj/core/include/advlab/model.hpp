#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

enum class LayerKind { dense, conv2d, relu, avgpool2, flatten };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

/// One layer of a micro classifier. conv2d is always same-padding; avgpool2
/// is a fixed 2x2 window with stride 2 and requires even spatial dims.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_features = 0;   // dense
  int out_features = 0;  // dense
  int out_channels = 0;  // conv2d
  int kernel_size = 0;   // conv2d, odd

  static LayerSpec dense(int in, int out);
  static LayerSpec conv(int out_channels, int kernel_size);
  static LayerSpec relu();
  static LayerSpec avgpool2();
  static LayerSpec flatten();

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
};

struct ModelSpec {
  std::vector<int> input_shape;  // (C, H, W)
  int num_classes = 0;
  std::vector<LayerSpec> layers;
};

/// Output shape after each layer; throws std::invalid_argument naming the
/// offending layer when consecutive shapes do not compose or the final shape
/// is not (num_classes).
std::vector<std::vector<int>> layer_output_shapes(const ModelSpec& spec);

enum class LossKind { cross_entropy, margin };

LossKind loss_kind_from_name(const std::string& name);
const char* loss_kind_name(LossKind kind);

/// Margin-loss offset on the logit scale: max(0, max_{j!=y} z_j - z_y + kappa).
inline constexpr double kMarginKappa = 5.0;

double loss_value(const Tensor& logits, int label, LossKind kind);
Tensor loss_grad_logits(const Tensor& logits, int label, LossKind kind);

struct ModelMetadata {
  std::string name;
  std::uint64_t train_seed = 0;
  std::string training = "untrained";  // untrained | standard | adversarial
  double train_accuracy = -1.0;
};

/// Micro differentiable classifier: a layer sequence with trained parameters,
/// a deterministic forward pass and exact input/parameter gradients.
class Model {
 public:
  /// Random init: every weight and bias uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
  /// drawn from the seed in layer order.
  Model(ModelSpec spec, std::uint64_t init_seed);
  /// Rebuild from explicit parameters (checkpoint load). Tensors for layers
  /// without parameters must be empty.
  Model(ModelSpec spec, std::vector<Tensor> weights, std::vector<Tensor> biases,
        ModelMetadata meta);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<int>& input_shape() const { return spec_.input_shape; }
  int num_classes() const { return spec_.num_classes; }
  ModelMetadata& metadata() { return meta_; }
  const ModelMetadata& metadata() const { return meta_; }

  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

  Tensor forward(const Tensor& x) const;
  int predict(const Tensor& x) const;  // argmax, lowest index on ties

  /// Every layer input plus the final logits, for reuse across backward calls.
  struct ForwardTrace {
    std::vector<Tensor> activations;  // activations[0] = x, activations.back() = logits
    const Tensor& logits() const { return activations.back(); }
  };
  ForwardTrace forward_trace(const Tensor& x) const;

  /// Backpropagate an explicit logit gradient down to the input.
  Tensor backward_input(const ForwardTrace& trace, const Tensor& logit_grad) const;

  struct LossAndGrad {
    double loss = 0.0;
    Tensor input_grad;
  };
  LossAndGrad loss_and_input_grad(const Tensor& x, int label, LossKind loss) const;

  struct ParamGrads {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
  };
  ParamGrads zero_param_grads() const;

  /// Full backward pass. Accumulates into param_grads when non-null; writes
  /// the input gradient when input_grad is non-null. Returns the loss.
  double backward(const Tensor& x, int label, LossKind loss, Tensor* input_grad,
                  ParamGrads* param_grads) const;

  /// Plain SGD step over all parameters.
  void apply_gradients(const ParamGrads& grads, double lr);

 private:
  Tensor layer_forward(std::size_t layer, const Tensor& in) const;
  Tensor layer_backward(std::size_t layer, const Tensor& in, const Tensor& dout,
                        ParamGrads* param_grads) const;

  ModelSpec spec_;
  std::vector<std::vector<int>> shapes_;  // output shape per layer
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  ModelMetadata meta_;
};

/// Central finite-difference estimate of the input gradient; the verification
/// oracle for backward().
Tensor finite_diff_grad(const Model& model, const Tensor& x, int label, LossKind loss,
                        double h = 1e-5);

}  // namespace advlab
