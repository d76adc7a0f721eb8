#include "weakseg/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace weakseg {

namespace {

struct DisjointSet {
  std::vector<int> parent, rank_, size;
  explicit DisjointSet(int n) : parent(n), rank_(n, 0), size(n, 1) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  int merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }
};

struct Edge {
  float w;
  int a, b;
};

double color_dist(const Tensor& img, int p, int q) {
  const int hw = img.dim(1) * img.dim(2);
  double acc = 0.0;
  for (int c = 0; c < img.dim(0); ++c) {
    const double d = img.data[c * hw + p] - img.data[c * hw + q];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

std::vector<int> segment_image(const Tensor& image, double k, int min_segment,
                               int* num_segments) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw std::invalid_argument("segment_image: image must be 1xHxW or 3xHxW");
  const int h = image.dim(1), w = image.dim(2), n = h * w;

  std::vector<Edge> edges;
  edges.reserve(static_cast<size_t>(2) * n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w)
        edges.push_back({static_cast<float>(color_dist(image, p, p + 1)), p, p + 1});
      if (y + 1 < h)
        edges.push_back({static_cast<float>(color_dist(image, p, p + w)), p, p + w});
    }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& a, const Edge& b) { return a.w < b.w; });

  DisjointSet ds(n);
  std::vector<double> internal(n, 0.0);  // max internal edge weight per root
  for (const Edge& e : edges) {
    const int ra = ds.find(e.a), rb = ds.find(e.b);
    if (ra == rb) continue;
    const double ta = internal[ra] + k / ds.size[ra];
    const double tb = internal[rb] + k / ds.size[rb];
    if (e.w <= ta && e.w <= tb) {
      const int r = ds.merge(ra, rb);
      internal[r] = std::max({internal[ra], internal[rb], static_cast<double>(e.w)});
    }
  }
  // absorb small components
  for (const Edge& e : edges) {
    const int ra = ds.find(e.a), rb = ds.find(e.b);
    if (ra != rb && (ds.size[ra] < min_segment || ds.size[rb] < min_segment))
      ds.merge(ra, rb);
  }

  std::vector<int> labels(n);
  std::map<int, int> remap;
  for (int i = 0; i < n; ++i) {
    const int r = ds.find(i);
    auto [it, inserted] = remap.emplace(r, static_cast<int>(remap.size()));
    labels[i] = it->second;
  }
  if (num_segments) *num_segments = static_cast<int>(remap.size());
  return labels;
}

std::vector<Box> generate_proposals(const Tensor& image,
                                    const ProposalParams& params) {
  const int h = image.dim(1), w = image.dim(2);
  int nseg = 0;
  const std::vector<int> labels =
      segment_image(image, params.seg_k, params.min_segment, &nseg);

  std::vector<double> sx1(nseg, 1e18), sy1(nseg, 1e18), sx2(nseg, -1e18),
      sy2(nseg, -1e18);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int s = labels[y * w + x];
      sx1[s] = std::min(sx1[s], static_cast<double>(x));
      sy1[s] = std::min(sy1[s], static_cast<double>(y));
      sx2[s] = std::max(sx2[s], static_cast<double>(x + 1));
      sy2[s] = std::max(sy2[s], static_cast<double>(y + 1));
    }

  std::set<std::pair<int, int>> adjacent;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int a = labels[y * w + x];
      if (x + 1 < w) {
        const int b = labels[y * w + x + 1];
        if (a != b) adjacent.emplace(std::min(a, b), std::max(a, b));
      }
      if (y + 1 < h) {
        const int b = labels[(y + 1) * w + x];
        if (a != b) adjacent.emplace(std::min(a, b), std::max(a, b));
      }
    }

  std::vector<Box> candidates;
  for (int s = 0; s < nseg; ++s)
    candidates.push_back({sx1[s], sy1[s], sx2[s], sy2[s]});
  for (const auto& [a, b] : adjacent)
    candidates.push_back({std::min(sx1[a], sx1[b]), std::min(sy1[a], sy1[b]),
                          std::max(sx2[a], sx2[b]), std::max(sy2[a], sy2[b])});

  // multi-scale sliding grid, 50% stride overlap
  for (int scale : params.grid_scales)
    for (double ratio : params.grid_ratios) {
      const double bw = scale * std::sqrt(ratio);
      const double bh = scale / std::sqrt(ratio);
      if (bw > w || bh > h) continue;
      const double sx = std::max(1.0, bw / 2), sy = std::max(1.0, bh / 2);
      for (double y = 0; y + bh <= h + 1e-9; y += sy)
        for (double x = 0; x + bw <= w + 1e-9; x += sx)
          candidates.push_back({x, y, x + bw, y + bh});
    }

  std::vector<Box> out;
  std::set<std::array<double, 4>> seen;
  for (Box b : candidates) {
    b = b.clipped(w, h);
    if (b.w() < params.min_box || b.h() < params.min_box) continue;
    if (seen.insert({b.x1, b.y1, b.x2, b.y2}).second) out.push_back(b);
  }

  if (static_cast<int>(out.size()) > params.cap) {
    Rng rng(params.seed, 0x9e0);
    // Fisher-Yates prefix shuffle, then restore a deterministic order
    for (int i = 0; i < params.cap; ++i) {
      const int j = i + rng.uniform_int(0, static_cast<int>(out.size()) - 1 - i);
      std::swap(out[i], out[j]);
    }
    out.resize(params.cap);
  }
  return out;
}

}  // namespace weakseg
