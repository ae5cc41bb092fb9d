// advlab command-line driver: dataset generation, model training, attack
// crafting, transfer evaluation, gradient diagnostics and GI ablations, all
// reproducible from a single JSON config.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advlab/checkpoint.hpp"
#include "advlab/config.hpp"
#include "advlab/evaluation.hpp"
#include "advlab/ops.hpp"
#include "advlab/parallel.hpp"
#include "advlab/train.hpp"

namespace fs = std::filesystem;
using namespace advlab;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string models_dir;
  std::vector<std::string> archives;
};

RunConfig load_config(const GlobalArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seed) {
    // one switch reseeds the whole run: the generator and every attack
    if (cfg.dataset.generate) cfg.dataset.generate->seed = *args.seed;
    for (AttackConfig& a : cfg.attacks) a.seed = *args.seed;
  }
  return cfg;
}

std::string hash8(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%08llx",
                static_cast<unsigned long long>(config_hash(cfg) & 0xffffffffULL));
  return buf;
}

fs::path make_run_dir(const RunConfig& cfg) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);

  const fs::path base = cfg.output_dir;
  fs::path dir = base / ("run-" + hash8(cfg) + "-" + stamp);
  for (int k = 2; fs::exists(dir); ++k) {
    dir = base / ("run-" + hash8(cfg) + "-" + std::string(stamp) + "-" + std::to_string(k));
  }
  fs::create_directories(dir);
  std::ofstream snap(dir / "resolved_config.json", std::ios::binary);
  snap << resolved_config_json(cfg);
  std::cout << "run-dir: " << dir.string() << "\n";
  return dir;
}

std::map<std::string, Model> load_models(const std::string& dir) {
  if (dir.empty()) throw std::runtime_error("this command needs --models DIR");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("model_", 0) == 0 && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw std::runtime_error("no model_*.json checkpoints in " + dir);
  std::sort(files.begin(), files.end());
  std::map<std::string, Model> models;
  for (const fs::path& f : files) {
    Model m = load_checkpoint(f.string());
    const std::string name = m.metadata().name;
    if (!models.emplace(name, std::move(m)).second) {
      throw std::runtime_error("duplicate model name '" + name + "' in " + dir);
    }
  }
  return models;
}

const Model& model_by_name(const std::map<std::string, Model>& models, const std::string& name) {
  auto it = models.find(name);
  if (it == models.end()) {
    throw std::runtime_error("model '" + name + "' not found among loaded checkpoints");
  }
  return it->second;
}

Surrogate resolve_surrogate(const std::map<std::string, Model>& models, const std::string& spec) {
  Surrogate s;
  s.name = spec;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t plus = spec.find('+', start);
    const std::string member = spec.substr(start, plus == std::string::npos ? plus : plus - start);
    if (member.empty()) throw std::runtime_error("bad surrogate spec: " + spec);
    s.models.push_back(&model_by_name(models, member));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return s;
}

Dataset eval_dataset(const RunConfig& cfg) {
  return cfg.evaluation.dataset ? cfg.evaluation.dataset->realize() : cfg.dataset.realize();
}

TransferOptions build_transfer_options(const RunConfig& cfg,
                                       const std::map<std::string, Model>& models, int jobs) {
  if (cfg.evaluation.surrogates.empty()) throw std::runtime_error("evaluation.surrogates is empty");
  if (cfg.evaluation.targets.empty()) throw std::runtime_error("evaluation.targets is empty");
  if (cfg.attacks.empty()) throw std::runtime_error("no attacks configured");
  TransferOptions opts;
  for (const std::string& s : cfg.evaluation.surrogates) {
    opts.surrogates.push_back(resolve_surrogate(models, s));
  }
  for (const std::string& t : cfg.evaluation.targets) {
    opts.targets.push_back(&model_by_name(models, t));
  }
  opts.attacks = cfg.attacks;
  opts.attack_seeds = cfg.evaluation.attack_seeds;
  opts.max_images = cfg.evaluation.max_images;
  opts.defense_bits = cfg.evaluation.defense_bits;
  opts.jobs = jobs;
  return opts;
}

int cmd_gen_data(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const Dataset data = cfg.dataset.realize();
  const fs::path dir = make_run_dir(cfg);
  save_dataset(data, (dir / "dataset.json").string());
  std::cout << "wrote " << (dir / "dataset.json").string() << " (" << data.size() << " images, "
            << data.config.classes << " classes)\n";
  return 0;
}

int cmd_train(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  if (cfg.models.empty()) throw std::runtime_error("no models configured");
  const Dataset data = cfg.dataset.realize();
  std::optional<Dataset> heldout;
  if (cfg.evaluation.dataset) heldout = cfg.evaluation.dataset->realize();

  const fs::path dir = make_run_dir(cfg);
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  manifest << "name,training,seed,train_accuracy,heldout_accuracy,checkpoint,error\n";

  int failures = 0;
  for (const ModelConfig& mc : cfg.models) {
    try {
      const ModelSpec spec = model_spec_from_config(mc, data.config.dims, data.config.classes);
      TrainOptions opts;
      opts.epochs = mc.epochs;
      opts.lr = mc.lr;
      opts.batch = mc.batch;
      opts.seed = mc.seed;
      opts.adversarial = mc.training == "adversarial";
      opts.adv_epsilon = mc.adv_epsilon;
      Model model = train(spec, data, opts, mc.name);
      const std::string file = "model_" + mc.name + ".json";
      save_checkpoint(model, (dir / file).string());
      char train_acc[16], held_acc[16];
      std::snprintf(train_acc, sizeof(train_acc), "%.4f", model.metadata().train_accuracy);
      std::snprintf(held_acc, sizeof(held_acc), "%.4f",
                    heldout ? accuracy(model, *heldout) : -1.0);
      manifest << mc.name << ',' << mc.training << ',' << mc.seed << ',' << train_acc << ','
               << held_acc << ',' << file << ",\n";
      std::cout << "trained " << mc.name << ": train accuracy " << train_acc << "\n";
    } catch (const std::exception& e) {
      // a diverging sibling must not stop the rest of the zoo
      ++failures;
      manifest << mc.name << ',' << mc.training << ',' << mc.seed << ",,,," << e.what() << "\n";
      std::cout << "FAILED " << mc.name << ": " << e.what() << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_attack(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const auto models = load_models(args.models_dir);
  if (cfg.evaluation.surrogates.empty()) throw std::runtime_error("evaluation.surrogates is empty");
  if (cfg.attacks.empty()) throw std::runtime_error("no attacks configured");
  const Dataset data = eval_dataset(cfg);

  // the crafted pool matches what evaluate will use, so archives replay exactly
  std::vector<const Model*> involved;
  std::vector<Surrogate> surrogates;
  for (const std::string& s : cfg.evaluation.surrogates) {
    surrogates.push_back(resolve_surrogate(models, s));
    for (const Model* m : surrogates.back().models) involved.push_back(m);
  }
  for (const std::string& t : cfg.evaluation.targets) {
    involved.push_back(&model_by_name(models, t));
  }
  std::vector<std::size_t> pool = eligible_indices(involved, data);
  if (cfg.evaluation.max_images > 0 &&
      pool.size() > static_cast<std::size_t>(cfg.evaluation.max_images)) {
    pool.resize(static_cast<std::size_t>(cfg.evaluation.max_images));
  }
  if (pool.empty()) throw std::runtime_error("eligible pool is empty");

  const fs::path dir = make_run_dir(cfg);
  std::ofstream log(dir / "attack_log.csv", std::ios::binary);
  log << "surrogate,attack,index,label,loss_first,loss_last,degenerate_iterations\n";

  for (const Surrogate& s : surrogates) {
    for (const AttackConfig& attack : cfg.attacks) {
      AttackArchive archive;
      archive.surrogate = s.name;
      archive.attack = attack;
      archive.entries.resize(pool.size());
      std::span<const Model* const> span(s.models.data(), s.models.size());
      parallel_for(pool.size(), args.jobs, [&](std::size_t k) {
        const std::size_t idx = pool[k];
        AttackResult res = run_attack(data.images[idx], data.labels[idx], span, attack,
                                      static_cast<std::uint64_t>(idx));
        if (linf_distance(res.x_adv, data.images[idx]) > attack.epsilon + 1e-12 ||
            res.x_adv.min_value() < 0.0 || res.x_adv.max_value() > 1.0) {
          throw std::runtime_error("attack on image " + std::to_string(idx) +
                                   " violated the perturbation contract");
        }
        ArchiveEntry& e = archive.entries[k];
        e.index = idx;
        e.label = data.labels[idx];
        e.x_adv = std::move(res.x_adv);
        e.losses = std::move(res.trace.losses);
        for (bool d : res.trace.degenerate) e.degenerate.push_back(d ? 1 : 0);
      });

      std::string file = "archive_" + s.name + "_" + attack.name() + ".json";
      std::replace(file.begin(), file.end(), '+', '-');
      save_archive(archive, (dir / file).string());
      for (const ArchiveEntry& e : archive.entries) {
        int degen = 0;
        for (int d : e.degenerate) degen += d;
        log << s.name << ',' << attack.name() << ',' << e.index << ',' << e.label << ','
            << e.losses.front() << ',' << e.losses.back() << ',' << degen << "\n";
      }
      std::cout << "crafted " << archive.entries.size() << " examples: " << file << "\n";
    }
  }
  return 0;
}

void run_checks(const RunConfig& cfg, const TransferReport& report, int& exit_code) {
  for (const CheckConfig& check : cfg.evaluation.checks) {
    // per-seed mean black-box rates for candidate and baseline
    std::map<std::string, double> cand_sum, base_sum;
    std::map<std::string, int> cand_n, base_n;
    for (const TransferCell& c : report.rows) {
      if (c.seed == "agg" || c.defense != "none" || c.target == c.surrogate) continue;
      if (!check.surrogate.empty() && c.surrogate != check.surrogate) continue;
      if (c.attack == check.attack) {
        cand_sum[c.seed] += c.success_rate;
        cand_n[c.seed] += 1;
      } else if (c.attack == check.baseline) {
        base_sum[c.seed] += c.success_rate;
        base_n[c.seed] += 1;
      }
    }
    std::vector<double> cand, base;
    for (const auto& [seed, sum] : cand_sum) {
      if (!base_n.count(seed)) continue;
      cand.push_back(sum / cand_n[seed]);
      base.push_back(base_sum[seed] / base_n[seed]);
    }
    if (cand.empty()) {
      std::cout << "[CHECK] FAIL " << check.attack << " vs " << check.baseline
                << ": no matching rows\n";
      exit_code = 2;
      continue;
    }
    const DirectionalGain gain = directional_gain(cand, base);
    const bool ok = gain.improved(check.min_gain_points, check.min_consistency);
    std::printf("[CHECK] %s %s vs %s: gain %.2f pts, consistency %.2f\n", ok ? "PASS" : "FAIL",
                check.attack.c_str(), check.baseline.c_str(), gain.mean_gain,
                gain.sign_consistency);
    if (!ok) exit_code = 2;
  }
}

int cmd_evaluate(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const auto models = load_models(args.models_dir);
  const Dataset data = eval_dataset(cfg);

  if (!args.archives.empty()) {
    // replay mode: rate archived examples against the configured targets
    if (cfg.evaluation.targets.empty()) throw std::runtime_error("evaluation.targets is empty");
    const fs::path dir = make_run_dir(cfg);
    TransferReport report;
    for (const std::string& path : args.archives) {
      const AttackArchive archive = load_archive(path);
      std::vector<Tensor> advs;
      std::vector<int> labels;
      for (const ArchiveEntry& e : archive.entries) {
        if (e.index >= data.size()) throw std::runtime_error("archive index out of range");
        if (linf_distance(e.x_adv, data.images[e.index]) > archive.attack.epsilon + 1e-12 ||
            e.x_adv.min_value() < 0.0 || e.x_adv.max_value() > 1.0) {
          throw std::runtime_error("archived example " + std::to_string(e.index) +
                                   " violates the perturbation contract");
        }
        advs.push_back(e.x_adv);
        labels.push_back(e.label);
      }
      for (const std::string& tname : cfg.evaluation.targets) {
        const Model& target = model_by_name(models, tname);
        TransferCell c;
        c.surrogate = archive.surrogate;
        c.target = tname;
        c.attack = archive.attack.name();
        c.epsilon = archive.attack.epsilon;
        c.steps = archive.attack.steps;
        c.gi_pre_steps = archive.attack.gi ? archive.attack.gi->pre_steps : 0;
        c.gi_search = archive.attack.gi ? archive.attack.gi->search_factor : 1.0;
        c.defense = "none";
        c.seed = std::to_string(archive.attack.seed);
        c.success_rate = attack_success_rate(target, advs, labels);
        c.n = static_cast<int>(advs.size());
        report.rows.push_back(std::move(c));
      }
    }
    std::ofstream csv(dir / "replay_report.csv", std::ios::binary);
    report.write_csv(csv);
    std::cout << "wrote " << (dir / "replay_report.csv").string() << "\n";
    return 0;
  }

  const TransferOptions opts = build_transfer_options(cfg, models, args.jobs);
  const fs::path dir = make_run_dir(cfg);
  const TransferReport report = transfer_matrix(opts, data);
  std::ofstream csv(dir / "report.csv", std::ios::binary);
  report.write_csv(csv);
  std::cout << "wrote " << (dir / "report.csv").string() << " (" << report.rows.size()
            << " rows)\n";

  int exit_code = 0;
  run_checks(cfg, report, exit_code);
  return exit_code;
}

int cmd_diagnose(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const auto models = load_models(args.models_dir);
  if (cfg.evaluation.surrogates.empty()) throw std::runtime_error("evaluation.surrogates is empty");
  if (cfg.attacks.empty()) throw std::runtime_error("no attacks configured");
  if (cfg.evaluation.surrogates.front().find('+') != std::string::npos) {
    throw std::runtime_error("diagnose expects a single-model surrogate");
  }
  const Model& model = model_by_name(models, cfg.evaluation.surrogates.front());
  const Dataset data = eval_dataset(cfg);

  ConsistencyOptions opts;
  opts.attack = cfg.attacks.front();
  opts.max_images = cfg.evaluation.diagnose_max_images;
  opts.jobs = args.jobs;

  const fs::path dir = make_run_dir(cfg);
  const ConsistencyReport report = gradient_consistency(model, data, opts);
  std::ofstream csv(dir / "consistency.csv", std::ios::binary);
  report.write_csv(csv);
  std::cout << "wrote " << (dir / "consistency.csv").string() << "\n";
  std::printf("mean off-diagonal cosine: raw %.4f, momentum %.4f (no GI) | raw %.4f, momentum %.4f (GI)\n",
              report.without_gi.mean_offdiagonal(report.without_gi.raw_cosine),
              report.without_gi.mean_offdiagonal(report.without_gi.momentum_cosine),
              report.with_gi.mean_offdiagonal(report.with_gi.raw_cosine),
              report.with_gi.mean_offdiagonal(report.with_gi.momentum_cosine));
  return 0;
}

int cmd_ablate(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const auto models = load_models(args.models_dir);
  if (!cfg.evaluation.ablation) throw std::runtime_error("evaluation.ablation is not configured");
  const Dataset data = eval_dataset(cfg);

  TransferOptions opts = build_transfer_options(cfg, models, args.jobs);
  opts.attacks.clear();  // ablate drives the base attack itself

  const AblationParam param = ablation_param_from_name(cfg.evaluation.ablation->param);
  const fs::path dir = make_run_dir(cfg);
  const TransferReport report =
      ablate(param, cfg.evaluation.ablation->grid, cfg.attacks.front(), opts, data);
  std::ofstream csv(dir / "ablation.csv", std::ios::binary);
  report.write_csv(csv);
  std::cout << "wrote " << (dir / "ablation.csv").string() << " (" << report.rows.size()
            << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial-attack laboratory"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "run configuration (JSON)")->required();
  app.add_option("--out", args.out_dir, "output base directory (overrides config)");
  app.add_option("--jobs", args.jobs, "parallel attack jobs")->check(CLI::PositiveNumber);
  app.add_option("--seed", args.seed, "override the generator and attack seeds");

  auto* gen = app.add_subcommand("gen-data", "write the dataset file");
  auto* train_cmd = app.add_subcommand("train", "train every configured model");
  auto* attack_cmd = app.add_subcommand("attack", "craft adversarial-example archives");
  auto* eval_cmd = app.add_subcommand("evaluate", "transfer/defense success-rate matrix");
  auto* diag = app.add_subcommand("diagnose", "gradient-consistency matrices");
  auto* abl = app.add_subcommand("ablate", "walk a GI parameter grid");

  for (CLI::App* cmd : {attack_cmd, eval_cmd, diag, abl}) {
    cmd->add_option("--models", args.models_dir, "directory holding model_*.json checkpoints");
  }
  eval_cmd->add_option("--archive", args.archives, "replay crafted archives instead of attacking");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (attack_cmd->parsed()) return cmd_attack(args);
    if (eval_cmd->parsed()) return cmd_evaluate(args);
    if (diag->parsed()) return cmd_diagnose(args);
    if (abl->parsed()) return cmd_ablate(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
