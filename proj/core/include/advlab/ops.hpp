#pragma once

#include "advlab/tensor.hpp"

namespace advlab {

/// L1 magnitude below which a gradient is treated as degenerate.
inline constexpr double kDegenerateL1 = 1e-12;

/// Elementwise sign: -1, 0, +1.
Tensor sign(const Tensor& t);

/// Elementwise clamp to [lo, hi].
Tensor clamp(const Tensor& t, double lo, double hi);

struct L1Normalized {
  Tensor value;
  bool degenerate = false;  // input L1 norm below kDegenerateL1; value is zero
};

/// t / sum(|t|). Degenerate inputs yield the zero tensor plus a flag so the
/// caller can decide whether to coast on momentum or abort the iteration.
L1Normalized l1_normalize(const Tensor& t);

/// Clamp a proposal into the L-inf ball of radius epsilon around reference,
/// intersected with the value range [lo, hi].
Tensor clip_to_ball(const Tensor& proposal, const Tensor& reference, double epsilon,
                    double lo, double hi);

struct CosineSimilarity {
  double value = 0.0;
  bool degenerate = false;  // one of the vectors is numerically zero
};

/// a.b / (|a||b|), in [-1, 1]. Zero vectors return 0 with the flag set.
CosineSimilarity cosine_similarity(const Tensor& a, const Tensor& b);

enum class Padding {
  same,   // zero-pad so output spatial dims equal input dims
  valid,  // no padding; output shrinks by kernel-1
};

/// 2-D cross-correlation on a (C, H, W) input.
///
/// A rank-2 (k, k) kernel is applied depthwise, one identical filter per
/// channel. A rank-4 (OutC, InC, k, k) kernel is a full convolution layer
/// (without bias). Kernels must be odd and square.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding = Padding::same);

/// Bilinear interpolation to (C, new_h, new_w) with corner-aligned sampling:
/// output pixel j samples input coordinate j*(in-1)/(out-1); a size-1 output
/// axis samples coordinate 0. Resizing to the identical dims is exact.
Tensor bilinear_resize(const Tensor& input, int new_h, int new_w);

}  // namespace advlab
