// scratch: zoo calibration (not part of the suite)
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/config.hpp"
#include "advlab/dataset.hpp"
#include "advlab/evaluation.hpp"
#include "advlab/train.hpp"

using namespace advlab;
using Clock = std::chrono::steady_clock;

static double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int main(int argc, char** argv) {
  int epochs = argc > 1 ? std::atoi(argv[1]) : 18;
  int n_train = argc > 2 ? std::atoi(argv[2]) : 480;
  int classes = argc > 3 ? std::atoi(argv[3]) : 6;
  double lr = argc > 4 ? std::atof(argv[4]) : 0.15;

  DatasetConfig train_cfg{1000, n_train, classes, {3, 16, 16}};
  DatasetConfig eval_cfg{2000, 240, classes, {3, 16, 16}};
  auto t0 = Clock::now();
  Dataset train_data = generate_dataset(train_cfg);
  Dataset eval_data = generate_dataset(eval_cfg);
  std::printf("datasets: %.2fs\n", secs(t0, Clock::now()));

  std::vector<std::pair<std::string, std::string>> archs = {
      {"mlp", "mlp"}, {"cnn_a", "cnn_small"}, {"cnn_b", "cnn_wide"}, {"cnn_c", "cnn_coarse"}};

  std::vector<Model> models;
  for (auto& [name, arch] : archs) {
    ModelConfig mc;
    mc.name = name;
    mc.arch = arch;
    mc.seed = 11;
    mc.epochs = epochs;
    mc.lr = lr;
    auto spec = model_spec_from_config(mc, train_cfg.dims, classes);
    auto t1 = Clock::now();
    TrainOptions opts;
    opts.epochs = epochs;
    opts.lr = lr;
    opts.seed = 11;
    Model m = train(spec, train_data, opts, name);
    double train_time = secs(t1, Clock::now());
    std::printf("%-8s train_acc %.3f heldout %.3f (%.1fs)\n", name.c_str(),
                m.metadata().train_accuracy, accuracy(m, eval_data), train_time);
    models.push_back(std::move(m));
  }

  // transfer: surrogate cnn_a -> others, MI vs GI-MI
  TransferOptions opts;
  opts.surrogates = {{"cnn_a", {&models[1]}}};
  opts.targets = {&models[0], &models[2], &models[3]};
  AttackConfig mi;
  mi.optimizer = AttackOptimizer::mifgsm;
  AttackConfig gi = mi;
  gi.gi = GiConfig{5, 10.0};
  AttackConfig ifgsm;
  ifgsm.optimizer = AttackOptimizer::ifgsm;
  opts.attacks = {ifgsm, mi, gi};
  opts.max_images = 150;
  auto t2 = Clock::now();
  TransferReport rep = transfer_matrix(opts, eval_data);
  std::printf("transfer: %.1fs\n", secs(t2, Clock::now()));
  for (auto& c : rep.rows) {
    if (c.seed != "agg") continue;
    std::printf("  %-14s %-8s -> %-8s rate %.3f (n=%d)\n", c.attack.c_str(), c.surrogate.c_str(),
                c.target.c_str(), c.success_rate, c.n);
  }

  // white-box check, every model attacking itself
  for (std::size_t i = 0; i < models.size(); ++i) {
    TransferOptions wb;
    wb.surrogates = {{archs[i].first, {&models[i]}}};
    wb.targets = {&models[i]};
    wb.attacks = {ifgsm, mi};
    wb.max_images = 150;
    TransferReport wrep = transfer_matrix(wb, eval_data);
    for (auto& c : wrep.rows) {
      if (c.seed != "agg") continue;
      std::printf("  whitebox %-8s %-12s rate %.3f (n=%d)\n", archs[i].first.c_str(),
                  c.attack.c_str(), c.success_rate, c.n);
    }
  }
  return 0;
}
