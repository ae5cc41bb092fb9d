#pragma once

#include <cstdint>
#include <string>

#include "advlab/dataset.hpp"
#include "advlab/model.hpp"

namespace advlab {

struct TrainOptions {
  int epochs = 20;
  double lr = 0.15;
  int batch = 32;
  std::uint64_t seed = 0;
  bool adversarial = false;       // mix FGSM examples into every minibatch
  double adv_epsilon = 8.0 / 255.0;
};

/// Deterministic minibatch SGD: fixed init from the seed, fixed shuffle order
/// per epoch, cross-entropy loss. With adversarial=true, every second example
/// of each minibatch is replaced by its FGSM perturbation against the current
/// parameters. Throws on divergence (non-finite loss) with epoch/batch context.
Model train(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
            const std::string& name = "");

double accuracy(const Model& model, const Dataset& data);

}  // namespace advlab
