#include "advlab/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "advlab/ops.hpp"

namespace advlab {

AttackOptimizer optimizer_from_name(const std::string& name) {
  if (name == "ifgsm") return AttackOptimizer::ifgsm;
  if (name == "mifgsm") return AttackOptimizer::mifgsm;
  if (name == "nifgsm") return AttackOptimizer::nifgsm;
  throw std::invalid_argument("unknown optimizer: " + name);
}

const char* optimizer_name(AttackOptimizer opt) {
  switch (opt) {
    case AttackOptimizer::ifgsm: return "ifgsm";
    case AttackOptimizer::mifgsm: return "mifgsm";
    case AttackOptimizer::nifgsm: return "nifgsm";
  }
  return "?";
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
  if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
  if (!(step_size() > 0.0)) throw std::invalid_argument("attack: alpha must be > 0");
  if (mu < 0.0) throw std::invalid_argument("attack: mu must be >= 0");
  if (vt) {
    if (vt->n_samples < 1) throw std::invalid_argument("attack: vt n_samples must be >= 1");
    if (vt->beta < 0.0) throw std::invalid_argument("attack: vt beta must be >= 0");
  }
  if (gi) {
    if (gi->pre_steps < 0) throw std::invalid_argument("attack: gi pre_steps must be >= 0");
    if (!(gi->search_factor > 0.0)) {
      throw std::invalid_argument("attack: gi search_factor must be > 0");
    }
    if (optimizer == AttackOptimizer::ifgsm) {
      throw std::invalid_argument("attack: momentum initialization requires mifgsm or nifgsm");
    }
  }
  transforms.validate();
}

std::string AttackConfig::name() const {
  std::string base;
  switch (optimizer) {
    case AttackOptimizer::ifgsm: base = "I"; break;
    case AttackOptimizer::mifgsm: base = "MI"; break;
    case AttackOptimizer::nifgsm: base = "NI"; break;
  }
  if (vt) base = "V" + base;
  if (gi && gi->pre_steps > 0) base = "GI-" + base;

  std::string tf;
  if (transforms.dim && transforms.tim && transforms.sim) {
    tf = "-CT";
  } else {
    if (transforms.dim) tf += "-DI";
    if (transforms.tim) tf += "-TI";
    if (transforms.sim) tf += "-SI";
  }
  return base + tf + "-FGSM";
}

FgsmResult fgsm(const Tensor& x, int y, const Model& model, double epsilon, LossKind loss) {
  if (epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  const auto lg = model.loss_and_input_grad(x, y, loss);
  const auto normalized = l1_normalize(lg.input_grad);
  if (normalized.degenerate) return {x, true};
  return {clamp(x + epsilon * sign(lg.input_grad), 0.0, 1.0), false};
}

MomentumState mi_step(const MomentumState& state, const Tensor& grad, double mu) {
  require_same_shape(state.g, grad, "mi_step");
  MomentumState next;
  next.v = state.v;
  next.g = state.g * mu;
  auto normalized = l1_normalize(grad);
  next.degenerate = normalized.degenerate;
  if (!normalized.degenerate) next.g += normalized.value;
  return next;
}

Tensor ni_lookahead(const Tensor& x, const MomentumState& state, double alpha, double mu) {
  require_same_shape(x, state.g, "ni_lookahead");
  return x + (alpha * mu) * state.g;
}

Model::LossAndGrad ensemble_gradient(std::span<const Model* const> models, const Tensor& x,
                                     int y, LossKind loss) {
  if (models.empty()) throw std::invalid_argument("ensemble_gradient: no models");
  const int classes = models.front()->num_classes();
  for (const Model* m : models) {
    if (m->num_classes() != classes) {
      throw std::invalid_argument("ensemble_gradient: class-count mismatch");
    }
  }

  const double weight = 1.0 / static_cast<double>(models.size());

  // mean logits, then dJ/dlogits once, then each model backpropagates its share
  std::vector<Model::ForwardTrace> traces;
  traces.reserve(models.size());
  Tensor mean({classes});
  for (const Model* m : models) {
    traces.push_back(m->forward_trace(x));
    mean += traces.back().logits();
  }
  mean *= weight;

  Model::LossAndGrad out;
  out.loss = loss_value(mean, y, loss);
  const Tensor dmean = loss_grad_logits(mean, y, loss);

  out.input_grad = Tensor(x.shape());
  for (std::size_t i = 0; i < models.size(); ++i) {
    out.input_grad += models[i]->backward_input(traces[i], dmean * weight);
  }
  return out;
}

PipelineGradient pipeline_gradient(std::span<const Model* const> models, const Tensor& x_eval,
                                   int y, const TransformPipeline& transforms, LossKind loss,
                                   Rng rng) {
  const int copies = transforms.sim ? transforms.sim->copies : 1;
  const std::vector<double> scales = sim_scales(copies);

  PipelineGradient out;
  out.grad = Tensor(x_eval.shape());
  for (double s : scales) {
    Tensor copy = x_eval * s;
    if (transforms.dim) copy = dim_transform(copy, *transforms.dim, rng);
    auto lg = ensemble_gradient(models, copy, y, loss);
    out.grad += lg.input_grad;
    out.mean_loss += lg.loss;
  }
  const double inv = 1.0 / static_cast<double>(copies);
  out.grad *= inv;
  out.mean_loss *= inv;

  if (transforms.tim) {
    const double sigma = transforms.tim->sigma > 0.0 ? transforms.tim->sigma
                                                     : transforms.tim->kernel_size / 3.0;
    out.grad = tim_smooth(out.grad, gaussian_kernel(transforms.tim->kernel_size, sigma));
  }

  double l1 = 0.0;
  for (std::size_t i = 0; i < out.grad.size(); ++i) l1 += std::fabs(out.grad[i]);
  out.degenerate = l1 < kDegenerateL1;
  return out;
}

VtGradient vt_gradient(std::span<const Model* const> models, const Tensor& x_eval, int y,
                       const Tensor& v, const VtConfig& vt, double epsilon,
                       const TransformPipeline& transforms, LossKind loss, Rng& iter_rng) {
  const PipelineGradient main = pipeline_gradient(models, x_eval, y, transforms, loss,
                                                  iter_rng.derive(0));
  VtGradient out;
  out.tuned = main.grad + v;
  out.v_next = Tensor(x_eval.shape());
  if (vt.beta > 0.0) {
    const double radius = vt.beta * epsilon;
    Tensor acc(x_eval.shape());
    for (int j = 0; j < vt.n_samples; ++j) {
      Rng neighbor_rng = iter_rng.derive(static_cast<std::uint64_t>(1 + j));
      Tensor xn(x_eval.shape());
      for (std::size_t i = 0; i < xn.size(); ++i) {
        xn[i] = std::clamp(x_eval[i] + neighbor_rng.uniform(-radius, radius), 0.0, 1.0);
      }
      acc += pipeline_gradient(models, xn, y, transforms, loss, neighbor_rng).grad;
    }
    out.v_next = acc * (1.0 / vt.n_samples) - main.grad;
  }
  return out;
}

namespace {

// Shared iteration body for the pre-convergence and main phases. Every random
// draw comes from a stream keyed on (phase, iteration, role), so enabling one
// component never perturbs another component's draws.
class Driver {
 public:
  Driver(const Tensor& x, int y, std::span<const Model* const> models, const AttackConfig& cfg,
         std::uint64_t instance)
      : x_orig_(x),
        y_(y),
        models_(models),
        cfg_(cfg),
        alpha_(cfg.step_size()),
        attack_rng_(Rng(cfg.seed).derive(instance)) {}

  void iterate(int phase, int t, double step, Tensor& x_cur, MomentumState& st,
               AttackTrace* trace) const {
    Rng iter_rng = attack_rng_.derive((static_cast<std::uint64_t>(phase) << 32) |
                                      static_cast<std::uint64_t>(t));

    const Tensor x_eval = (cfg_.optimizer == AttackOptimizer::nifgsm)
                              ? ni_lookahead(x_cur, st, step, cfg_.mu)
                              : x_cur;

    PipelineGradient pg = pipeline_gradient(models_, x_eval, y_, cfg_.transforms, cfg_.loss,
                                            iter_rng.derive(0));
    Tensor used = pg.grad;
    if (cfg_.vt) {
      Tensor tuned = pg.grad + st.v;
      st.v = Tensor(x_eval.shape());
      if (cfg_.vt->beta > 0.0) {
        const double radius = cfg_.vt->beta * cfg_.epsilon;
        Tensor acc(x_eval.shape());
        for (int j = 0; j < cfg_.vt->n_samples; ++j) {
          Rng neighbor_rng = iter_rng.derive(static_cast<std::uint64_t>(1 + j));
          Tensor xn(x_eval.shape());
          for (std::size_t i = 0; i < xn.size(); ++i) {
            xn[i] = std::clamp(x_eval[i] + neighbor_rng.uniform(-radius, radius), 0.0, 1.0);
          }
          acc += pipeline_gradient(models_, xn, y_, cfg_.transforms, cfg_.loss, neighbor_rng).grad;
        }
        st.v = acc * (1.0 / cfg_.vt->n_samples) - pg.grad;
      }
      used = std::move(tuned);
    }

    Tensor direction_source;
    bool degenerate = false;
    if (cfg_.optimizer == AttackOptimizer::ifgsm) {
      degenerate = l1_normalize(used).degenerate;
      direction_source = std::move(used);
    } else {
      st = mi_step(st, used, cfg_.mu);
      degenerate = st.degenerate;
      direction_source = st.g;
    }

    x_cur = clip_to_ball(x_cur + step * sign(direction_source), x_orig_, cfg_.epsilon, 0.0, 1.0);

    if (trace) {
      trace->losses.push_back(pg.mean_loss);
      trace->raw_grads.push_back(std::move(pg.grad));
      trace->momenta.push_back(std::move(direction_source));
      trace->degenerate.push_back(degenerate);
    }
  }

  // Algorithm phase 0: P iterations at step search_factor * alpha on a scratch
  // image; the momentum survives, the image and variance state do not.
  MomentumState preconverge() const {
    MomentumState st{Tensor(x_orig_.shape()), Tensor(x_orig_.shape())};
    Tensor scratch = x_orig_;
    const double step = cfg_.gi->search_factor * alpha_;
    for (int t = 0; t < cfg_.gi->pre_steps; ++t) {
      iterate(0, t, step, scratch, st, nullptr);
    }
    return st;
  }

  AttackResult run() const {
    MomentumState st{Tensor(x_orig_.shape()), Tensor(x_orig_.shape())};
    if (cfg_.gi && cfg_.gi->pre_steps > 0) {
      st.g = preconverge().g;
    }
    AttackResult result;
    Tensor x_cur = x_orig_;
    for (int t = 0; t < cfg_.steps; ++t) {
      iterate(1, t, alpha_, x_cur, st, &result.trace);
    }
    result.x_adv = std::move(x_cur);
    return result;
  }

 private:
  const Tensor& x_orig_;
  int y_;
  std::span<const Model* const> models_;
  const AttackConfig& cfg_;
  double alpha_;
  Rng attack_rng_;
};

void check_attack_inputs(const Tensor& x, int y, std::span<const Model* const> models) {
  if (models.empty()) throw std::invalid_argument("attack: no surrogate models");
  for (const Model* m : models) {
    if (m->input_shape() != x.shape()) {
      throw std::invalid_argument("attack: image shape does not match the surrogate");
    }
    if (y < 0 || y >= m->num_classes()) throw std::invalid_argument("attack: label out of range");
  }
  if (x.min_value() < 0.0 || x.max_value() > 1.0) {
    throw std::invalid_argument("attack: image values must lie in [0, 1]");
  }
}

}  // namespace

Tensor gi_preconverge(const Tensor& x, int y, std::span<const Model* const> models,
                      const AttackConfig& cfg, std::uint64_t instance) {
  cfg.validate();
  check_attack_inputs(x, y, models);
  if (!cfg.gi || cfg.gi->pre_steps < 1) {
    throw std::invalid_argument("gi_preconverge: config has no pre-convergence steps");
  }
  return Driver(x, y, models, cfg, instance).preconverge().g;
}

AttackResult run_attack(const Tensor& x, int y, std::span<const Model* const> models,
                        const AttackConfig& cfg, std::uint64_t instance) {
  cfg.validate();
  check_attack_inputs(x, y, models);
  return Driver(x, y, models, cfg, instance).run();
}

}  // namespace advlab
