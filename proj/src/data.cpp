#include "weakseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "weakseg/image_io.hpp"

namespace weakseg {

namespace {

using nlohmann::json;

// smooth 2-d value noise: bilinear interpolation of a coarse random lattice
Tensor value_noise(int size, int cell, Rng& rng) {
  const int gw = size / cell + 2;
  std::vector<double> lattice(static_cast<size_t>(gw) * gw);
  for (double& v : lattice) v = rng.uniform(0.0, 1.0);
  Tensor out({size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double gy = static_cast<double>(y) / cell;
      const double gx = static_cast<double>(x) / cell;
      const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      const double fy = gy - y0, fx = gx - x0;
      const double sy = fy * fy * (3 - 2 * fy), sx = fx * fx * (3 - 2 * fx);
      const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
      const double c = lattice[(y0 + 1) * gw + x0],
                   d = lattice[(y0 + 1) * gw + x0 + 1];
      out.data[y * size + x] =
          a * (1 - sy) * (1 - sx) + b * (1 - sy) * sx + c * sy * (1 - sx) +
          d * sy * sx;
    }
  return out;
}

bool inside_shape(int cls, double u, double v) {
  // u, v in [-1, 1] relative to the shape's bounding square
  switch (cls) {
    case 1:  // circle
      return u * u + v * v <= 1.0;
    case 2:  // square
      return std::abs(u) <= 0.82 && std::abs(v) <= 0.82;
    case 3:  // triangle (upward, inscribed in the square)
      return v >= -0.9 && v <= 0.9 && std::abs(u) <= (v + 0.9) / 1.8;
    default:
      return false;
  }
}

}  // namespace

std::vector<Sample> gen_synthetic(int n, uint64_t seed,
                                  const SynthParams& p) {
  if (n < 1) throw std::invalid_argument("gen_synthetic: n >= 1 required");
  std::vector<Sample> out;
  out.reserve(n);
  const int S = p.size;

  for (int idx = 0; idx < n; ++idx) {
    Rng rng(seed, static_cast<uint64_t>(idx) + 1);
    Sample s;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", idx);
    s.id = buf;
    s.image = Tensor({3, S, S});
    s.labels.assign(p.num_classes, 0);

    // textured background: per-channel tinted value noise
    const Tensor noise = value_noise(S, 8, rng);
    const Tensor fine = value_noise(S, 3, rng);
    double tint[3];
    for (double& t : tint) t = rng.uniform(0.15, 0.45);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < S * S; ++i)
        s.image.data[c * S * S + i] =
            tint[c] + 0.25 * noise.data[i] + 0.1 * fine.data[i];

    const int count = rng.uniform_int(p.min_instances, p.max_instances);
    std::vector<Box> placed;
    for (int inst = 0; inst < count; ++inst) {
      // rejection sampling keeps mutual IoU under the easy-split cap
      Box box;
      bool ok = false;
      for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
        const int sz = rng.uniform_int(p.min_shape, p.max_shape);
        const int x0 = rng.uniform_int(1, S - sz - 1);
        const int y0 = rng.uniform_int(1, S - sz - 1);
        box = Box{static_cast<double>(x0), static_cast<double>(y0),
                  static_cast<double>(x0 + sz), static_cast<double>(y0 + sz)};
        ok = true;
        for (const Box& other : placed)
          if (iou(box, other) > p.max_mutual_iou) ok = false;
      }
      if (!ok) continue;
      placed.push_back(box);

      const int cls = rng.uniform_int(1, p.num_classes);
      double color[3];
      for (double& cch : color) cch = rng.uniform(0.0, 1.0);
      // keep shapes clearly brighter or darker than the mid-gray background
      const double lum = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2];
      if (lum > 0.3 && lum < 0.7)
        for (double& cch : color) cch = std::min(1.0, cch + 0.45);

      GtInstance gi;
      gi.cls = cls;
      gi.mask = Tensor({S, S});
      const double cx = box.cx(), cy = box.cy(), half = box.w() / 2.0;
      int x_lo = S, x_hi = -1, y_lo = S, y_hi = -1;
      for (int y = static_cast<int>(box.y1); y < box.y2; ++y)
        for (int x = static_cast<int>(box.x1); x < box.x2; ++x) {
          const double u = (x + 0.5 - cx) / half, v = (y + 0.5 - cy) / half;
          if (!inside_shape(cls, u, v)) continue;
          gi.mask.data[y * S + x] = 1.0;
          for (int c = 0; c < 3; ++c) s.image.data[(c * S + y) * S + x] = color[c];
          x_lo = std::min(x_lo, x);
          x_hi = std::max(x_hi, x);
          y_lo = std::min(y_lo, y);
          y_hi = std::max(y_hi, y);
        }
      if (x_hi < x_lo) continue;  // degenerate raster (cannot happen at >=10px)
      gi.box = Box{static_cast<double>(x_lo), static_cast<double>(y_lo),
                   x_hi + 1.0, y_hi + 1.0};
      // later instances may overdraw earlier masks; subtract the overlap
      for (GtInstance& prev : s.gt)
        for (int i = 0; i < S * S; ++i)
          if (gi.mask.data[i] > 0) prev.mask.data[i] = 0.0;
      s.gt.push_back(std::move(gi));
      s.labels[cls - 1] = 1;
    }

    // light pixel noise on top of everything
    for (double& v : s.image.data)
      v = std::clamp(v + rng.uniform(-0.02, 0.02), 0.0, 1.0);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> mask_to_rle(const Tensor& mask) {
  std::vector<int> rle;
  int run = 0;
  int cur = 0;  // runs start with background
  for (double v : mask.data) {
    const int bit = v >= 0.5 ? 1 : 0;
    if (bit == cur) {
      ++run;
    } else {
      rle.push_back(run);
      cur = bit;
      run = 1;
    }
  }
  rle.push_back(run);
  return rle;
}

Tensor rle_to_mask(const std::vector<int>& rle, int height, int width) {
  Tensor mask({height, width});
  int64_t pos = 0;
  int bit = 0;
  for (int run : rle) {
    if (run < 0 || pos + run > mask.numel())
      throw std::runtime_error("rle_to_mask: runs exceed mask size");
    if (bit)
      for (int i = 0; i < run; ++i) mask.data[pos + i] = 1.0;
    pos += run;
    bit ^= 1;
  }
  if (pos != mask.numel())
    throw std::runtime_error("rle_to_mask: runs do not cover the mask");
  return mask;
}

void save_dataset(const std::string& dir, const std::vector<Sample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("cannot write annotations in " + dir);

  for (const Sample& s : samples) {
    const std::string rel = "images/" + s.id + ".png";
    write_png_rgb((fs::path(dir) / rel).string(), s.image);
    json j;
    j["image"] = rel;
    j["labels"] = s.labels;
    j["instances"] = json::array();
    for (const GtInstance& gi : s.gt) {
      json inst;
      inst["class"] = gi.cls;
      inst["box"] = {gi.box.x1, gi.box.y1, gi.box.x2, gi.box.y2};
      inst["mask_rle"] = mask_to_rle(gi.mask);
      j["instances"].push_back(std::move(inst));
    }
    ann << j.dump() << "\n";
  }
}

std::vector<Sample> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("cannot open annotations in " + dir);

  std::vector<Sample> out;
  std::string line;
  while (std::getline(ann, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Sample s;
    const std::string rel = j.at("image").get<std::string>();
    s.image = read_png_rgb((fs::path(dir) / rel).string());
    const auto stem = fs::path(rel).stem().string();
    s.id = stem;
    s.labels = j.at("labels").get<std::vector<int>>();
    const int h = s.image.dim(1), w = s.image.dim(2);
    for (const json& inst : j.at("instances")) {
      GtInstance gi;
      gi.cls = inst.at("class").get<int>();
      const auto b = inst.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw std::runtime_error("bad box in annotations");
      gi.box = Box{b[0], b[1], b[2], b[3]};
      gi.mask = rle_to_mask(inst.at("mask_rle").get<std::vector<int>>(), h, w);
      s.gt.push_back(std::move(gi));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace weakseg
