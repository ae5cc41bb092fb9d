#include "advlab/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "advlab/ops.hpp"
#include "advlab/rng.hpp"

namespace advlab {

Model train(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
            const std::string& name) {
  if (data.size() == 0) throw std::invalid_argument("train: dataset is empty");
  if (opts.batch < 1 || opts.epochs < 1) throw std::invalid_argument("train: bad options");

  Model model(spec, opts.seed);
  Rng root(opts.seed);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t n = data.size();
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Fisher-Yates with a per-epoch substream
    Rng shuffle_rng = root.derive(static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i + 1)));
      std::swap(order[i], order[j]);
    }

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(opts.batch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(opts.batch));
      Model::ParamGrads grads = model.zero_param_grads();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const Tensor* x = &data.images[idx];
        Tensor adv;
        if (opts.adversarial && (k - start) % 2 == 1) {
          // single-step FGSM against the current parameters
          const auto lg = model.loss_and_input_grad(*x, data.labels[idx], LossKind::cross_entropy);
          adv = clamp(*x + opts.adv_epsilon * sign(lg.input_grad), 0.0, 1.0);
          x = &adv;
        }
        batch_loss += model.backward(*x, data.labels[idx], LossKind::cross_entropy, nullptr, &grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train: diverged (non-finite loss) in model '" + name +
                                 "' at epoch " + std::to_string(epoch) + ", batch starting at " +
                                 std::to_string(start));
      }
      for (auto& t : grads.weights) t *= scale;
      for (auto& t : grads.biases) t *= scale;
      model.apply_gradients(grads, opts.lr);
    }
  }

  ModelMetadata& meta = model.metadata();
  meta.name = name;
  meta.train_seed = opts.seed;
  meta.training = opts.adversarial ? "adversarial" : "standard";
  meta.train_accuracy = accuracy(model, data);
  return model;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: dataset is empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (model.predict(data.images[i]) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace advlab
