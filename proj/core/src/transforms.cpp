#include "advlab/transforms.hpp"

#include <cmath>
#include <stdexcept>

#include "advlab/attack.hpp"
#include "advlab/ops.hpp"

namespace advlab {

void TransformPipeline::validate() const {
  if (dim) {
    if (dim->probability < 0.0 || dim->probability > 1.0) {
      throw std::invalid_argument("transforms: dim probability must be in [0, 1]");
    }
    if (dim->max_scale <= 1.0) throw std::invalid_argument("transforms: dim max_scale must be > 1");
  }
  if (tim) {
    if (tim->kernel_size < 1 || tim->kernel_size % 2 == 0) {
      throw std::invalid_argument("transforms: tim kernel size must be odd and positive");
    }
  }
  if (sim && sim->copies < 1) throw std::invalid_argument("transforms: sim copies must be >= 1");
}

Tensor dim_apply(const Tensor& x, int canvas, int new_h, int new_w, int off_y, int off_x) {
  if (x.rank() != 3) throw std::invalid_argument("dim_apply: input must be (C, H, W)");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (new_h < 1 || new_w < 1 || canvas < new_h || canvas < new_w) {
    throw std::invalid_argument("dim_apply: canvas must cover the resized image");
  }
  if (off_y < 0 || off_x < 0 || off_y + new_h > canvas || off_x + new_w > canvas) {
    throw std::invalid_argument("dim_apply: offset puts the image outside the canvas");
  }

  const Tensor resized = bilinear_resize(x, new_h, new_w);
  if (canvas == h && canvas == w && new_h == h && new_w == w) return resized;

  Tensor padded({c, canvas, canvas});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < new_h; ++y) {
      for (int px = 0; px < new_w; ++px) {
        padded.at(ch, off_y + y, off_x + px) = resized.at(ch, y, px);
      }
    }
  }
  return bilinear_resize(padded, h, w);
}

Tensor dim_transform(const Tensor& x, const DimConfig& cfg, Rng& rng) {
  if (x.rank() != 3) throw std::invalid_argument("dim_transform: input must be (C, H, W)");
  const int h = x.dim(1), w = x.dim(2);
  if (!rng.bernoulli(cfg.probability)) return x;

  const int canvas = static_cast<int>(std::ceil(cfg.max_scale * std::max(h, w)));
  const int new_h = h + rng.uniform_int(canvas - h + 1);
  const int new_w = w + rng.uniform_int(canvas - w + 1);
  // the draw that does not enlarge needs no canvas round trip
  if (new_h == h && new_w == w) return x;
  const int off_y = rng.uniform_int(canvas - new_h + 1);
  const int off_x = rng.uniform_int(canvas - new_w + 1);
  return dim_apply(x, canvas, new_h, new_w, off_y, off_x);
}

Tensor gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("gaussian_kernel: k must be odd");
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  Tensor kernel({k, k});
  const int c = k / 2;
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double dy = i - c, dx = j - c;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      kernel[static_cast<std::size_t>(i) * k + j] = v;
      sum += v;
    }
  }
  kernel *= 1.0 / sum;
  return kernel;
}

Tensor tim_smooth(const Tensor& grad, const Tensor& kernel) {
  if (kernel.rank() != 2) throw std::invalid_argument("tim_smooth: kernel must be rank 2");
  return conv2d(grad, kernel, Padding::same);
}

std::vector<double> sim_scales(int m) {
  if (m < 1) throw std::invalid_argument("sim_scales: m must be >= 1");
  std::vector<double> scales(static_cast<std::size_t>(m));
  double s = 1.0;
  for (int i = 0; i < m; ++i) {
    scales[static_cast<std::size_t>(i)] = s;
    s *= 0.5;
  }
  return scales;
}

Tensor sim_gradient(std::span<const Model* const> models, const Tensor& x, int y, int copies,
                    const std::optional<DimConfig>& dim, LossKind loss, Rng& rng) {
  const std::vector<double> scales = sim_scales(copies);
  Tensor acc(x.shape());
  for (double s : scales) {
    Tensor copy = x * s;
    if (dim) copy = dim_transform(copy, *dim, rng);
    acc += ensemble_gradient(models, copy, y, loss).input_grad;
  }
  acc *= 1.0 / static_cast<double>(copies);
  return acc;
}

Tensor bit_reduce(const Tensor& x, int bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bit_reduce: bits must be in [1, 8]");
  const double levels = static_cast<double>((1 << bits) - 1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::round(x[i] * levels) / levels;
  }
  return out;
}

}  // namespace advlab
