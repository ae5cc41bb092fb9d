#include "advlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advlab {

Tensor sign(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[i] = (t[i] > 0.0) ? 1.0 : (t[i] < 0.0 ? -1.0 : 0.0);
  }
  return out;
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::clamp(t[i], lo, hi);
  return out;
}

L1Normalized l1_normalize(const Tensor& t) {
  double norm = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) norm += std::fabs(t[i]);
  if (norm < kDegenerateL1) {
    return {Tensor(t.shape()), true};
  }
  Tensor out(t.shape());
  const double inv = 1.0 / norm;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] * inv;
  return {std::move(out), false};
}

Tensor clip_to_ball(const Tensor& proposal, const Tensor& reference, double epsilon,
                    double lo, double hi) {
  require_same_shape(proposal, reference, "clip_to_ball");
  if (epsilon < 0.0) throw std::invalid_argument("clip_to_ball: epsilon must be >= 0");
  if (!(lo < hi)) throw std::invalid_argument("clip_to_ball: lo must be < hi");
  Tensor out(proposal.shape());
  for (std::size_t i = 0; i < proposal.size(); ++i) {
    const double ball_lo = reference[i] - epsilon;
    const double ball_hi = reference[i] + epsilon;
    out[i] = std::clamp(std::clamp(proposal[i], ball_lo, ball_hi), lo, hi);
  }
  return out;
}

CosineSimilarity cosine_similarity(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_similarity");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  const double v = dot / (std::sqrt(na) * std::sqrt(nb));
  return {std::clamp(v, -1.0, 1.0), false};
}

namespace {

void check_kernel_square_odd(int kh, int kw) {
  if (kh != kw) throw std::invalid_argument("conv2d: kernel must be square");
  if (kh % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
}

// One output channel: correlate `in_plane` (H x W) with `k x k` taps.
void correlate_plane(const double* in_plane, int h, int w, const double* taps, int k,
                     int pad, double* out_plane, int out_h, int out_w) {
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= h) continue;
        const double* in_row = in_plane + static_cast<std::size_t>(iy) * w;
        const double* tap_row = taps + static_cast<std::size_t>(ky) * k;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= w) continue;
          acc += tap_row[kx] * in_row[ix];
        }
      }
      out_plane[static_cast<std::size_t>(oy) * out_w + ox] += acc;
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding) {
  if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be (C, H, W)");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);

  int k = 0;
  int out_c = 0;
  bool depthwise = false;
  if (kernel.rank() == 2) {
    check_kernel_square_odd(kernel.dim(0), kernel.dim(1));
    k = kernel.dim(0);
    out_c = c;
    depthwise = true;
  } else if (kernel.rank() == 4) {
    check_kernel_square_odd(kernel.dim(2), kernel.dim(3));
    if (kernel.dim(1) != c) {
      throw std::invalid_argument("conv2d: kernel input channels do not match input");
    }
    k = kernel.dim(2);
    out_c = kernel.dim(0);
  } else {
    throw std::invalid_argument("conv2d: kernel must be rank 2 (depthwise) or rank 4");
  }

  const int pad = (padding == Padding::same) ? k / 2 : 0;
  const int out_h = (padding == Padding::same) ? h : h - k + 1;
  const int out_w = (padding == Padding::same) ? w : w - k + 1;
  if (out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("conv2d: kernel larger than input under valid padding");
  }

  Tensor out({out_c, out_h, out_w});
  const std::size_t in_plane_sz = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane_sz = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t tap_sz = static_cast<std::size_t>(k) * k;

  if (depthwise) {
    for (int ch = 0; ch < c; ++ch) {
      correlate_plane(input.data() + ch * in_plane_sz, h, w, kernel.data(), k, pad,
                      out.data() + ch * out_plane_sz, out_h, out_w);
    }
  } else {
    for (int oc = 0; oc < out_c; ++oc) {
      double* out_plane = out.data() + oc * out_plane_sz;
      for (int ic = 0; ic < c; ++ic) {
        const double* taps = kernel.data() + (static_cast<std::size_t>(oc) * c + ic) * tap_sz;
        correlate_plane(input.data() + ic * in_plane_sz, h, w, taps, k, pad, out_plane,
                        out_h, out_w);
      }
    }
  }
  return out;
}

Tensor bilinear_resize(const Tensor& input, int new_h, int new_w) {
  if (input.rank() != 3) throw std::invalid_argument("bilinear_resize: input must be (C, H, W)");
  if (new_h < 1 || new_w < 1) {
    throw std::invalid_argument("bilinear_resize: target dims must be positive");
  }
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (new_h == h && new_w == w) return input;

  const double sy = (new_h > 1) ? static_cast<double>(h - 1) / (new_h - 1) : 0.0;
  const double sx = (new_w > 1) ? static_cast<double>(w - 1) / (new_w - 1) : 0.0;

  Tensor out({c, new_h, new_w});
  for (int oy = 0; oy < new_h; ++oy) {
    const double fy = oy * sy;
    const int y0 = std::min(static_cast<int>(fy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < new_w; ++ox) {
      const double fx = ox * sx;
      const int x0 = std::min(static_cast<int>(fx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top = input.at(ch, y0, x0) * (1.0 - wx) + input.at(ch, y0, x1) * wx;
        const double bot = input.at(ch, y1, x0) * (1.0 - wx) + input.at(ch, y1, x1) * wx;
        out.at(ch, oy, ox) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

}  // namespace advlab
