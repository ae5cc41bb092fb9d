#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/model.hpp"

namespace advlab {

/// Attack source: one model, or several fused through logit averaging.
struct Surrogate {
  std::string name;  // display label; ensembles join member names with '+'
  std::vector<const Model*> models;
};

struct TransferCell {
  std::string surrogate;
  std::string target;
  std::string attack;
  double epsilon = 0.0;
  int steps = 0;
  int gi_pre_steps = 0;     // 0 when pre-convergence is off
  double gi_search = 1.0;   // 1 when pre-convergence is off
  std::string defense;      // "none" or "bit-red-<bits>"
  std::string seed;         // decimal attack seed, or "agg"
  double success_rate = 0.0;
  double stddev = 0.0;      // across seeds; meaningful on agg rows only
  int n = 0;                // attacked images
};

struct TransferReport {
  std::vector<TransferCell> rows;

  /// header: surrogate,target,attack,epsilon,steps,P,S,defense,seed,success_rate,n
  void write_csv(std::ostream& out) const;

  /// Mean success over agg rows matching the filters (empty filter = any);
  /// white-box rows (target == surrogate) are skipped when black_box_only.
  double mean_rate(const std::string& attack, const std::string& surrogate = "",
                   const std::string& defense = "none", bool black_box_only = true) const;
};

/// Images every listed model classifies correctly: the eligible pool. Attack
/// success on this pool is always an induced error, never a pre-existing one.
std::vector<std::size_t> eligible_indices(std::span<const Model* const> models,
                                          const Dataset& data);

/// Fraction of adversarial examples the target misclassifies.
double attack_success_rate(const Model& target, std::span<const Tensor> x_advs,
                           std::span<const int> ys);

/// attack_success_rate after bit-depth reduction of each example.
double defended_success_rate(const Model& target, int bits, std::span<const Tensor> x_advs,
                             std::span<const int> ys);

struct TransferOptions {
  std::vector<Surrogate> surrogates;
  std::vector<const Model*> targets;
  std::vector<AttackConfig> attacks;
  std::vector<std::uint64_t> attack_seeds = {0};
  int max_images = 0;             // cap on the eligible pool; 0 keeps all
  std::vector<int> defense_bits;  // extra defended rows per listed bit depth
  int jobs = 1;
};

/// Full cross product (surrogate x attack x seed x target). Adversarial
/// examples are crafted once per (surrogate, attack, seed) and reused across
/// targets; every example is revalidated against the L-inf and range
/// contract at ingestion. Aggregate rows carry mean and stddev across seeds.
TransferReport transfer_matrix(const TransferOptions& opts, const Dataset& data);

struct ConsistencyMatrices {
  Tensor raw_cosine;       // T x T cosine of per-iteration pipeline gradients
  Tensor momentum_cosine;  // T x T cosine of accumulated attack directions
  Tensor sign_agreement;   // T x T mean over pixels of sign(g_i) * sign(g_j)
  std::vector<double> first_to_others;  // momentum cosine, iteration 1 vs j
  std::vector<double> last_to_others;   // momentum cosine, iteration T vs j

  double mean_offdiagonal(const Tensor& matrix) const;
};

struct ConsistencyReport {
  int steps = 0;
  ConsistencyMatrices without_gi;
  ConsistencyMatrices with_gi;

  /// long form: matrix,i,j,value
  void write_csv(std::ostream& out) const;
};

struct ConsistencyOptions {
  AttackConfig attack;  // its gi block (or the default one) drives the with-GI variant
  int max_images = 32;
  int jobs = 1;
};

/// Gradient-direction diagnostics averaged over eligible images, computed
/// both without and with momentum pre-convergence.
ConsistencyReport gradient_consistency(const Model& model, const Dataset& data,
                                       const ConsistencyOptions& opts);

enum class AblationParam { pre_steps, search_factor };
AblationParam ablation_param_from_name(const std::string& name);

/// Transfer rates of the base attack while one pre-convergence parameter
/// walks the grid; emits one report row block per grid point.
TransferReport ablate(AblationParam param, std::span<const double> grid,
                      const AttackConfig& base, const TransferOptions& opts,
                      const Dataset& data);

/// Paired comparison across seeds, in percentage points.
struct DirectionalGain {
  double mean_gain = 0.0;
  double sign_consistency = 0.0;  // fraction of seeds where candidate > baseline
  bool improved(double min_gain_points = 2.0, double min_consistency = 2.0 / 3.0) const {
    return mean_gain >= min_gain_points && sign_consistency >= min_consistency - 1e-9;
  }
};
DirectionalGain directional_gain(std::span<const double> candidate,
                                 std::span<const double> baseline);

}  // namespace advlab
