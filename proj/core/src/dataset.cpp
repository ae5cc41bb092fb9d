#include "advlab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "advlab/rng.hpp"

namespace advlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double quantize8(double v) { return std::round(clamp01(v) * 255.0) / 255.0; }

struct PatternParams {
  int kind = 0;
  double angle = 0.0;
  double freq = 0.0;     // cycles per pixel
  double phase_a = 0.0;
  double phase_b = 0.0;
  double cy = 0.0, cx = 0.0;
  double radius = 0.0;
  double width = 0.0;
};

PatternParams draw_pattern(int label, int h, int w, Rng& rng) {
  PatternParams p;
  p.kind = label % 6;
  // higher class indices reuse the base shapes at a finer scale
  const double band = 1.0 / (1.0 + 0.3 * (label / 6));
  switch (p.kind) {
    case 0:  // horizontal stripes (variation along rows)
    case 1:  // vertical stripes
    case 2:  // diagonal stripes
    {
      const double base = p.kind == 0 ? kPi / 2 : (p.kind == 1 ? 0.0 : kPi / 4);
      p.angle = base + rng.uniform(-0.16, 0.16);
      p.freq = rng.uniform(0.10, 0.15) * band;
      p.phase_a = rng.uniform(0.0, 2.0 * kPi);
      break;
    }
    case 3:  // checkerboard
      p.angle = rng.uniform(-0.14, 0.14);
      p.freq = rng.uniform(0.08, 0.12) * band;
      p.phase_a = rng.uniform(0.0, 2.0 * kPi);
      p.phase_b = rng.uniform(0.0, 2.0 * kPi);
      break;
    case 4:  // disk
      p.cy = rng.uniform(0.35, 0.65) * h;
      p.cx = rng.uniform(0.35, 0.65) * w;
      p.radius = rng.uniform(0.20, 0.30) * h * band;
      p.width = 1.4;
      break;
    case 5:  // ring
      p.cy = rng.uniform(0.40, 0.60) * h;
      p.cx = rng.uniform(0.40, 0.60) * w;
      p.radius = rng.uniform(0.26, 0.38) * h * band;
      p.width = rng.uniform(0.09, 0.14) * h;
      break;
  }
  return p;
}

double pattern_value(const PatternParams& p, int y, int x) {
  switch (p.kind) {
    case 0:
    case 1:
    case 2: {
      const double t = std::cos(p.angle) * x + std::sin(p.angle) * y;
      return 0.5 + 0.5 * std::cos(2.0 * kPi * p.freq * t + p.phase_a);
    }
    case 3: {
      const double u = std::cos(p.angle) * x + std::sin(p.angle) * y;
      const double v = -std::sin(p.angle) * x + std::cos(p.angle) * y;
      const double s = std::cos(2.0 * kPi * p.freq * u + p.phase_a) *
                       std::cos(2.0 * kPi * p.freq * v + p.phase_b);
      return 0.5 + 0.5 * s;
    }
    case 4: {
      const double r = std::hypot(y - p.cy, x - p.cx);
      return clamp01((p.radius - r) / p.width + 0.5);
    }
    case 5: {
      const double r = std::hypot(y - p.cy, x - p.cx);
      return clamp01(1.0 - std::fabs(r - p.radius) / p.width);
    }
  }
  return 0.0;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("generate_dataset: need >= 2 classes");
  if (cfg.n < cfg.classes) throw std::invalid_argument("generate_dataset: n must be >= classes");
  if (cfg.dims.size() != 3 || cfg.dims[0] < 1 || cfg.dims[1] < 4 || cfg.dims[2] < 4) {
    throw std::invalid_argument("generate_dataset: dims must be (C, H>=4, W>=4)");
  }
  const int c = cfg.dims[0], h = cfg.dims[1], w = cfg.dims[2];

  Dataset data;
  data.config = cfg;
  data.images.reserve(static_cast<std::size_t>(cfg.n));
  data.labels.reserve(static_cast<std::size_t>(cfg.n));

  Rng root(cfg.seed);
  for (int i = 0; i < cfg.n; ++i) {
    const int label = i % cfg.classes;
    Rng rng = root.derive(static_cast<std::uint64_t>(i) + 1);

    const PatternParams pat = draw_pattern(label, h, w, rng);
    const double contrast = rng.uniform(0.26, 0.36);
    std::vector<double> bg(static_cast<std::size_t>(c)), gain(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      bg[static_cast<std::size_t>(ch)] = rng.uniform(0.15, 0.30);
      gain[static_cast<std::size_t>(ch)] = rng.uniform(0.55, 0.85);
    }

    Tensor img({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double p = pattern_value(pat, y, x);
          const double noise = rng.uniform(-0.12, 0.12);
          img.at(ch, y, x) = quantize8(bg[static_cast<std::size_t>(ch)] +
                                       contrast * gain[static_cast<std::size_t>(ch)] * p + noise);
        }
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("IDX: truncated header in " + path);
  }
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("IDX: cannot open " + images_path);
  const std::uint32_t img_magic = read_be_u32(imgs, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("IDX image file " + images_path + ": expected magic 0x00000803, read " +
                             hex32(img_magic));
  }
  const std::uint32_t n = read_be_u32(imgs, images_path);
  const std::uint32_t rows = read_be_u32(imgs, images_path);
  const std::uint32_t cols = read_be_u32(imgs, images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("IDX: cannot open " + labels_path);
  const std::uint32_t lab_magic = read_be_u32(labs, labels_path);
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error("IDX label file " + labels_path + ": expected magic 0x00000801, read " +
                             hex32(lab_magic));
  }
  const std::uint32_t n_labels = read_be_u32(labs, labels_path);
  if (n_labels != n) {
    throw std::runtime_error("IDX: image count " + std::to_string(n) + " != label count " +
                             std::to_string(n_labels));
  }

  Dataset data;
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) {
      throw std::runtime_error("IDX: truncated image data in " + images_path);
    }
    Tensor img({1, static_cast<int>(rows), static_cast<int>(cols)});
    for (std::size_t p = 0; p < pixels; ++p) img[p] = buf[p] / 255.0;
    data.images.push_back(std::move(img));

    char lab = 0;
    if (!labs.read(&lab, 1)) throw std::runtime_error("IDX: truncated label data in " + labels_path);
    data.labels.push_back(static_cast<unsigned char>(lab));
    max_label = std::max(max_label, data.labels.back());
  }
  data.config.seed = 0;
  data.config.n = static_cast<int>(n);
  data.config.classes = max_label + 1;
  data.config.dims = {1, static_cast<int>(rows), static_cast<int>(cols)};
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = {{"seed", data.config.seed},
                 {"n", data.config.n},
                 {"classes", data.config.classes},
                 {"dims", data.config.dims}};
  j["labels"] = data.labels;
  nlohmann::json pixels = nlohmann::json::array();
  for (const Tensor& img : data.images) {
    std::vector<int> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double scaled = img[i] * 255.0;
      const int b = static_cast<int>(std::lround(scaled));
      if (b < 0 || b > 255 || std::fabs(scaled - b) > 1e-9) {
        throw std::invalid_argument("save_dataset: pixel off the 8-bit grid");
      }
      bytes[i] = b;
    }
    pixels.push_back(bytes);
  }
  j["pixels"] = std::move(pixels);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << j.dump();
  out << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: malformed file " + path + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw std::runtime_error("load_dataset: unsupported version in " + path);
  }
  Dataset data;
  data.config.seed = j["config"]["seed"].get<std::uint64_t>();
  data.config.n = j["config"]["n"].get<int>();
  data.config.classes = j["config"]["classes"].get<int>();
  data.config.dims = j["config"]["dims"].get<std::vector<int>>();
  data.labels = j["labels"].get<std::vector<int>>();
  if (data.config.dims.size() != 3) throw std::runtime_error("load_dataset: bad dims in " + path);

  const std::vector<int> shape = data.config.dims;
  for (const auto& img_bytes : j["pixels"]) {
    std::vector<double> vals;
    vals.reserve(img_bytes.size());
    for (const auto& b : img_bytes) vals.push_back(b.get<int>() / 255.0);
    data.images.emplace_back(shape, std::move(vals));
  }
  if (data.images.size() != data.labels.size()) {
    throw std::runtime_error("load_dataset: image/label count mismatch in " + path);
  }
  return data;
}

}  // namespace advlab
