#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"
#include "advlab/transforms.hpp"

namespace advlab {

enum class AttackOptimizer { ifgsm, mifgsm, nifgsm };

AttackOptimizer optimizer_from_name(const std::string& name);
const char* optimizer_name(AttackOptimizer opt);

/// Gradient variance tuning: correct each step with the mean gradient over
/// sampled neighbors of the iterate.
struct VtConfig {
  int n_samples = 20;
  double beta = 1.5;  // neighborhood half-width as a multiple of epsilon
};

/// Momentum pre-convergence with an amplified exploration step.
struct GiConfig {
  int pre_steps = 5;
  double search_factor = 10.0;
};

struct AttackConfig {
  double epsilon = 16.0 / 255.0;  // L-inf budget on the [0, 1] pixel scale
  int steps = 10;
  double alpha = 0.0;  // per-step size; <= 0 selects epsilon / steps
  double mu = 1.0;     // momentum decay
  AttackOptimizer optimizer = AttackOptimizer::mifgsm;
  std::optional<VtConfig> vt;
  std::optional<GiConfig> gi;
  TransformPipeline transforms;
  LossKind loss = LossKind::cross_entropy;
  std::uint64_t seed = 0;

  double step_size() const { return alpha > 0.0 ? alpha : epsilon / steps; }
  void validate() const;

  /// Label derived from the enabled components, e.g. "MI-FGSM",
  /// "GI-VNI-CT-FGSM". Partial transform stacks append -DI/-TI/-SI.
  std::string name() const;
};

/// Accumulated attack state threaded through iterations.
struct MomentumState {
  Tensor g;  // momentum
  Tensor v;  // variance-tuning correction
  bool degenerate = false;  // last accumulated gradient was numerically zero
};

struct AttackTrace {
  std::vector<double> losses;      // mean loss at the gradient-evaluation point
  std::vector<Tensor> raw_grads;   // pipeline gradient before momentum/tuning
  std::vector<Tensor> momenta;     // vector whose sign produced the update
  std::vector<bool> degenerate;
};

struct AttackResult {
  Tensor x_adv;
  AttackTrace trace;
};

struct FgsmResult {
  Tensor x_adv;
  bool degenerate = false;
};

/// Single-step sign attack: x + epsilon * sign(grad), clamped to [0, 1].
/// A degenerate (zero) gradient returns x unchanged with the flag set.
FgsmResult fgsm(const Tensor& x, int y, const Model& model, double epsilon,
                LossKind loss = LossKind::cross_entropy);

/// Momentum accumulation g <- mu * g + grad / ||grad||_1. Degenerate
/// gradients keep mu * g and set the flag; v is carried through untouched.
MomentumState mi_step(const MomentumState& state, const Tensor& grad, double mu);

/// Nesterov gradient-evaluation point x + alpha * mu * g. Not clipped; it is
/// only where the gradient is taken, never an emitted image.
Tensor ni_lookahead(const Tensor& x, const MomentumState& state, double alpha, double mu);

/// Loss on the uniform average of the models' logits, with the gradient
/// backpropagated through the average. Models must share input shape and
/// class count.
Model::LossAndGrad ensemble_gradient(std::span<const Model* const> models, const Tensor& x,
                                     int y, LossKind loss);

/// Gradient of one attack iteration through the transform stack: average over
/// scaled/diversified copies, then kernel smoothing. mean_loss averages the
/// per-copy ensemble losses.
struct PipelineGradient {
  Tensor grad;
  double mean_loss = 0.0;
  bool degenerate = false;
};
PipelineGradient pipeline_gradient(std::span<const Model* const> models, const Tensor& x_eval,
                                   int y, const TransformPipeline& transforms, LossKind loss,
                                   Rng rng);

struct VtGradient {
  Tensor tuned;   // gradient + incoming v
  Tensor v_next;  // mean neighbor gradient minus the gradient at x_eval
};
/// Variance-tuned gradient at x_eval. Neighbors are drawn uniformly from
/// [-beta*epsilon, beta*epsilon] per element and range-clipped to [0, 1]
/// before evaluation; beta = 0 yields v_next = 0 without sampling.
VtGradient vt_gradient(std::span<const Model* const> models, const Tensor& x_eval, int y,
                       const Tensor& v, const VtConfig& vt, double epsilon,
                       const TransformPipeline& transforms, LossKind loss, Rng& iter_rng);

/// Momentum after the pre-convergence phase: P iterations of the configured
/// optimizer at step search_factor * alpha on a scratch copy of x, clipped to
/// the same epsilon ball. The scratch image is discarded; only g_P survives.
Tensor gi_preconverge(const Tensor& x, int y, std::span<const Model* const> models,
                      const AttackConfig& cfg, std::uint64_t instance = 0);

/// Generic iterative driver realizing I/MI/NI-FGSM with optional variance
/// tuning, transform stack, momentum pre-convergence and surrogate ensembles.
/// Deterministic in (x, y, models, cfg, instance); instance separates the
/// random streams of concurrent per-image jobs.
AttackResult run_attack(const Tensor& x, int y, std::span<const Model* const> models,
                        const AttackConfig& cfg, std::uint64_t instance = 0);

}  // namespace advlab
