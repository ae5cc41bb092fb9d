#include "advlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include "advlab/ops.hpp"
#include "advlab/parallel.hpp"
#include "advlab/transforms.hpp"

namespace advlab {

namespace {

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

void TransferReport::write_csv(std::ostream& out) const {
  out << "surrogate,target,attack,epsilon,steps,P,S,defense,seed,success_rate,n\n";
  for (const TransferCell& c : rows) {
    out << c.surrogate << ',' << c.target << ',' << c.attack << ',' << format4(c.epsilon) << ','
        << c.steps << ',' << c.gi_pre_steps << ',' << format4(c.gi_search) << ',' << c.defense
        << ',' << c.seed << ',' << format4(c.success_rate) << ',' << c.n << '\n';
  }
}

double TransferReport::mean_rate(const std::string& attack, const std::string& surrogate,
                                 const std::string& defense, bool black_box_only) const {
  double sum = 0.0;
  int count = 0;
  for (const TransferCell& c : rows) {
    if (c.seed != "agg") continue;
    if (!attack.empty() && c.attack != attack) continue;
    if (!surrogate.empty() && c.surrogate != surrogate) continue;
    if (!defense.empty() && c.defense != defense) continue;
    if (black_box_only && c.target == c.surrogate) continue;
    sum += c.success_rate;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("TransferReport::mean_rate: no matching agg rows");
  return sum / count;
}

std::vector<std::size_t> eligible_indices(std::span<const Model* const> models,
                                          const Dataset& data) {
  if (models.empty()) throw std::invalid_argument("eligible_indices: no models");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool ok = true;
    for (const Model* m : models) {
      if (m->predict(data.images[i]) != data.labels[i]) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(i);
  }
  return out;
}

double attack_success_rate(const Model& target, std::span<const Tensor> x_advs,
                           std::span<const int> ys) {
  if (x_advs.empty() || x_advs.size() != ys.size()) {
    throw std::invalid_argument("attack_success_rate: empty or mismatched evaluation set");
  }
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < x_advs.size(); ++i) {
    if (target.predict(x_advs[i]) != ys[i]) ++fooled;
  }
  return static_cast<double>(fooled) / static_cast<double>(x_advs.size());
}

double defended_success_rate(const Model& target, int bits, std::span<const Tensor> x_advs,
                             std::span<const int> ys) {
  if (x_advs.empty() || x_advs.size() != ys.size()) {
    throw std::invalid_argument("defended_success_rate: empty or mismatched evaluation set");
  }
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < x_advs.size(); ++i) {
    if (target.predict(bit_reduce(x_advs[i], bits)) != ys[i]) ++fooled;
  }
  return static_cast<double>(fooled) / static_cast<double>(x_advs.size());
}

namespace {

struct CraftedBatch {
  std::vector<Tensor> advs;
  std::vector<int> labels;
};

CraftedBatch craft(const Surrogate& surrogate, const AttackConfig& cfg,
                   const std::vector<std::size_t>& pool, const Dataset& data, int jobs) {
  CraftedBatch batch;
  batch.advs.resize(pool.size());
  batch.labels.resize(pool.size());
  std::span<const Model* const> models(surrogate.models.data(), surrogate.models.size());
  parallel_for(pool.size(), jobs, [&](std::size_t k) {
    const std::size_t idx = pool[k];
    AttackResult res = run_attack(data.images[idx], data.labels[idx], models, cfg,
                                  static_cast<std::uint64_t>(idx));
    // never trust the driver: re-check the contract at ingestion
    const double dist = linf_distance(res.x_adv, data.images[idx]);
    if (dist > cfg.epsilon + 1e-12 || res.x_adv.min_value() < 0.0 || res.x_adv.max_value() > 1.0) {
      throw std::runtime_error("transfer_matrix: emitted example violates the attack contract");
    }
    batch.advs[k] = std::move(res.x_adv);
    batch.labels[k] = data.labels[idx];
  });
  return batch;
}

TransferCell base_cell(const Surrogate& s, const AttackConfig& cfg, int n) {
  TransferCell c;
  c.surrogate = s.name;
  c.attack = cfg.name();
  c.epsilon = cfg.epsilon;
  c.steps = cfg.steps;
  c.gi_pre_steps = (cfg.gi && cfg.gi->pre_steps > 0) ? cfg.gi->pre_steps : 0;
  c.gi_search = (cfg.gi && cfg.gi->pre_steps > 0) ? cfg.gi->search_factor : 1.0;
  c.n = n;
  return c;
}

}  // namespace

TransferReport transfer_matrix(const TransferOptions& opts, const Dataset& data) {
  if (opts.surrogates.empty() || opts.targets.empty() || opts.attacks.empty()) {
    throw std::invalid_argument("transfer_matrix: surrogates, targets and attacks are required");
  }
  if (opts.attack_seeds.empty()) throw std::invalid_argument("transfer_matrix: need >= 1 seed");
  for (int bits : opts.defense_bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("transfer_matrix: bad defense bits");
  }

  // pool = images every involved model gets right
  std::vector<const Model*> involved(opts.targets.begin(), opts.targets.end());
  for (const Surrogate& s : opts.surrogates) {
    involved.insert(involved.end(), s.models.begin(), s.models.end());
  }
  std::vector<std::size_t> pool = eligible_indices(involved, data);
  if (opts.max_images > 0 && pool.size() > static_cast<std::size_t>(opts.max_images)) {
    pool.resize(static_cast<std::size_t>(opts.max_images));
  }
  if (pool.empty()) throw std::runtime_error("transfer_matrix: eligible pool is empty");

  TransferReport report;
  // (surrogate, attack, target, defense) -> per-seed rates, for agg rows
  std::map<std::string, std::vector<double>> groups;
  std::vector<std::string> group_order;
  std::map<std::string, TransferCell> group_proto;

  for (const Surrogate& s : opts.surrogates) {
    for (const AttackConfig& attack : opts.attacks) {
      for (std::uint64_t seed : opts.attack_seeds) {
        AttackConfig cfg = attack;
        cfg.seed = seed;
        const CraftedBatch batch = craft(s, cfg, pool, data, opts.jobs);
        for (const Model* target : opts.targets) {
          std::vector<std::string> defenses = {"none"};
          for (int bits : opts.defense_bits) defenses.push_back("bit-red-" + std::to_string(bits));
          for (const std::string& defense : defenses) {
            TransferCell c = base_cell(s, cfg, static_cast<int>(pool.size()));
            c.target = target->metadata().name;
            c.defense = defense;
            c.seed = std::to_string(seed);
            if (defense == "none") {
              c.success_rate = attack_success_rate(*target, batch.advs, batch.labels);
            } else {
              const int bits = std::stoi(defense.substr(defense.rfind('-') + 1));
              c.success_rate = defended_success_rate(*target, bits, batch.advs, batch.labels);
            }
            const std::string key = c.surrogate + '\n' + c.attack + '\n' + c.target + '\n' +
                                    c.defense;
            if (!groups.count(key)) {
              group_order.push_back(key);
              group_proto[key] = c;
            }
            groups[key].push_back(c.success_rate);
            report.rows.push_back(std::move(c));
          }
        }
      }
    }
  }

  for (const std::string& key : group_order) {
    const std::vector<double>& rates = groups[key];
    TransferCell agg = group_proto[key];
    agg.seed = "agg";
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double r : rates) var += (r - mean) * (r - mean);
    agg.success_rate = mean;
    agg.stddev = rates.size() > 1 ? std::sqrt(var / static_cast<double>(rates.size() - 1)) : 0.0;
    report.rows.push_back(std::move(agg));
  }
  return report;
}

double ConsistencyMatrices::mean_offdiagonal(const Tensor& matrix) const {
  const int t = matrix.dim(0);
  if (t < 2) throw std::invalid_argument("mean_offdiagonal: need T >= 2");
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      if (i == j) continue;
      sum += matrix[static_cast<std::size_t>(i) * t + j];
      ++count;
    }
  }
  return sum / count;
}

namespace {

void write_matrix_csv(std::ostream& out, const std::string& name, const Tensor& m) {
  const int t = m.dim(0);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      out << name << ',' << i << ',' << j << ',' << format4(m[static_cast<std::size_t>(i) * t + j])
          << '\n';
    }
  }
}

void write_series_csv(std::ostream& out, const std::string& name, int anchor,
                      const std::vector<double>& series) {
  for (std::size_t j = 0; j < series.size(); ++j) {
    out << name << ',' << anchor << ',' << j << ',' << format4(series[j]) << '\n';
  }
}

ConsistencyMatrices average_matrices(const Model& model, const Dataset& data,
                                     const std::vector<std::size_t>& pool,
                                     const AttackConfig& cfg, int jobs) {
  const int t = cfg.steps;
  std::vector<AttackTrace> traces(pool.size());
  const Model* model_ptr = &model;
  parallel_for(pool.size(), jobs, [&](std::size_t k) {
    const std::size_t idx = pool[k];
    traces[k] = run_attack(data.images[idx], data.labels[idx],
                           std::span<const Model* const>(&model_ptr, 1), cfg,
                           static_cast<std::uint64_t>(idx))
                    .trace;
  });

  ConsistencyMatrices m;
  m.raw_cosine = Tensor({t, t});
  m.momentum_cosine = Tensor({t, t});
  m.sign_agreement = Tensor({t, t});
  for (const AttackTrace& trace : traces) {
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        const std::size_t off = static_cast<std::size_t>(i) * t + j;
        m.raw_cosine[off] += cosine_similarity(trace.raw_grads[i], trace.raw_grads[j]).value;
        m.momentum_cosine[off] += cosine_similarity(trace.momenta[i], trace.momenta[j]).value;
        const Tensor si = sign(trace.momenta[i]);
        const Tensor sj = sign(trace.momenta[j]);
        double agree = 0.0;
        for (std::size_t p = 0; p < si.size(); ++p) agree += si[p] * sj[p];
        m.sign_agreement[off] += agree / static_cast<double>(si.size());
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(traces.size());
  m.raw_cosine *= inv;
  m.momentum_cosine *= inv;
  m.sign_agreement *= inv;

  m.first_to_others.resize(static_cast<std::size_t>(t));
  m.last_to_others.resize(static_cast<std::size_t>(t));
  for (int j = 0; j < t; ++j) {
    m.first_to_others[static_cast<std::size_t>(j)] = m.momentum_cosine[static_cast<std::size_t>(j)];
    m.last_to_others[static_cast<std::size_t>(j)] =
        m.momentum_cosine[(static_cast<std::size_t>(t) - 1) * t + j];
  }
  return m;
}

}  // namespace

void ConsistencyReport::write_csv(std::ostream& out) const {
  out << "matrix,i,j,value\n";
  write_matrix_csv(out, "nogi_raw_cosine", without_gi.raw_cosine);
  write_matrix_csv(out, "nogi_momentum_cosine", without_gi.momentum_cosine);
  write_matrix_csv(out, "nogi_sign_agreement", without_gi.sign_agreement);
  write_series_csv(out, "nogi_first_to_others", 0, without_gi.first_to_others);
  write_series_csv(out, "nogi_last_to_others", steps - 1, without_gi.last_to_others);
  write_matrix_csv(out, "gi_raw_cosine", with_gi.raw_cosine);
  write_matrix_csv(out, "gi_momentum_cosine", with_gi.momentum_cosine);
  write_matrix_csv(out, "gi_sign_agreement", with_gi.sign_agreement);
  write_series_csv(out, "gi_first_to_others", 0, with_gi.first_to_others);
  write_series_csv(out, "gi_last_to_others", steps - 1, with_gi.last_to_others);
}

ConsistencyReport gradient_consistency(const Model& model, const Dataset& data,
                                       const ConsistencyOptions& opts) {
  if (opts.attack.steps < 2) throw std::invalid_argument("gradient_consistency: need T >= 2");
  const Model* model_ptr = &model;
  std::vector<std::size_t> pool =
      eligible_indices(std::span<const Model* const>(&model_ptr, 1), data);
  if (opts.max_images > 0 && pool.size() > static_cast<std::size_t>(opts.max_images)) {
    pool.resize(static_cast<std::size_t>(opts.max_images));
  }
  if (pool.empty()) throw std::runtime_error("gradient_consistency: eligible pool is empty");

  AttackConfig without = opts.attack;
  without.gi.reset();
  AttackConfig with = opts.attack;
  if (!with.gi) with.gi = GiConfig{};

  ConsistencyReport report;
  report.steps = opts.attack.steps;
  report.without_gi = average_matrices(model, data, pool, without, opts.jobs);
  report.with_gi = average_matrices(model, data, pool, with, opts.jobs);
  return report;
}

AblationParam ablation_param_from_name(const std::string& name) {
  if (name == "P" || name == "pre_steps") return AblationParam::pre_steps;
  if (name == "S" || name == "search_factor") return AblationParam::search_factor;
  throw std::invalid_argument("unknown ablation parameter: " + name);
}

TransferReport ablate(AblationParam param, std::span<const double> grid,
                      const AttackConfig& base, const TransferOptions& opts,
                      const Dataset& data) {
  if (grid.empty()) throw std::invalid_argument("ablate: empty grid");
  TransferReport combined;
  for (double value : grid) {
    AttackConfig cfg = base;
    if (!cfg.gi) cfg.gi = GiConfig{};
    if (param == AblationParam::pre_steps) {
      cfg.gi->pre_steps = static_cast<int>(value);
    } else {
      cfg.gi->search_factor = value;
    }
    TransferOptions point = opts;
    point.attacks = {cfg};
    TransferReport r = transfer_matrix(point, data);
    combined.rows.insert(combined.rows.end(), r.rows.begin(), r.rows.end());
  }
  return combined;
}

DirectionalGain directional_gain(std::span<const double> candidate,
                                 std::span<const double> baseline) {
  if (candidate.empty() || candidate.size() != baseline.size()) {
    throw std::invalid_argument("directional_gain: need matched nonempty rate arrays");
  }
  DirectionalGain g;
  int wins = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    g.mean_gain += (candidate[i] - baseline[i]) * 100.0;
    if (candidate[i] > baseline[i]) ++wins;
  }
  g.mean_gain /= static_cast<double>(candidate.size());
  g.sign_consistency = static_cast<double>(wins) / static_cast<double>(candidate.size());
  return g;
}

}  // namespace advlab
