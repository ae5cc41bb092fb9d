#pragma once

#include <optional>
#include <span>
#include <vector>

#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

/// Random resize-and-pad input diversity.
struct DimConfig {
  double probability = 0.5;
  double max_scale = 330.0 / 299.0;  // canvas enlargement factor
};

/// Gaussian-kernel gradient smoothing.
struct TimConfig {
  int kernel_size = 7;
  double sigma = 0.0;  // <= 0 means kernel_size / 3
};

/// Scaled input copies x / 2^i.
struct SimConfig {
  int copies = 5;
};

/// Attack-time transform stack. Order is fixed: per scaled copy, the input is
/// (optionally) diversified, gradients are averaged over copies, then the
/// averaged gradient is smoothed.
struct TransformPipeline {
  std::optional<DimConfig> dim;
  std::optional<TimConfig> tim;
  std::optional<SimConfig> sim;

  bool any() const { return dim || tim || sim; }
  void validate() const;
};

/// Deterministic core of the diverse-input transform: bilinear-resize x to
/// (new_h, new_w), zero-pad at (off_y, off_x) into a canvas x canvas square,
/// then resize back to the original dims. canvas must cover the resized image.
Tensor dim_apply(const Tensor& x, int canvas, int new_h, int new_w, int off_y, int off_x);

/// With probability p, resize to a drawn (h', w') in [H, ceil(max_scale*H)],
/// pad into the enlarged canvas at a drawn offset, and resize back; otherwise
/// identity. The no-enlargement draw is an exact no-op.
Tensor dim_transform(const Tensor& x, const DimConfig& cfg, Rng& rng);

/// k x k kernel with entries proportional to exp(-(i^2+j^2)/(2 sigma^2))
/// around the center, normalized to sum 1. k must be odd.
Tensor gaussian_kernel(int k, double sigma);

/// Depthwise same-padding convolution of a gradient with a smoothing kernel.
Tensor tim_smooth(const Tensor& grad, const Tensor& kernel);

/// Pixel-value scales {1, 1/2, ..., 1/2^(m-1)} used for the scaled copies.
std::vector<double> sim_scales(int m);

/// Average input gradient over m scaled copies x/2^i, each copy independently
/// diversified when dim is set. Gradients are taken with respect to the
/// transformed copy and accumulated at matching pixels. Multiple models are
/// fused by averaging their logits before the loss.
Tensor sim_gradient(std::span<const Model* const> models, const Tensor& x, int y, int copies,
                    const std::optional<DimConfig>& dim, LossKind loss, Rng& rng);

/// Bit-depth-reduction defense: quantize each pixel to 2^bits levels.
Tensor bit_reduce(const Tensor& x, int bits);

}  // namespace advlab
