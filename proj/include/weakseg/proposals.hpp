#pragma once

#include <vector>

#include "weakseg/boxes.hpp"
#include "weakseg/tensor.hpp"

namespace weakseg {

struct ProposalParams {
  // graph segmentation: threshold function tau(c) = k / |c|
  double seg_k = 0.6;
  int min_segment = 8;   // segments below this size merge into a neighbor
  int min_box = 4;       // drop boxes smaller than this extent
  int cap = 300;         // max proposals, enforced by seeded subsampling
  uint64_t seed = 42;
  std::vector<int> grid_scales = {16, 32, 48};
  std::vector<double> grid_ratios = {0.5, 1.0, 2.0};
};

// Felzenszwalb-style graph segmentation over the 4-connected pixel grid,
// edge weight = euclidean color distance. Returns a per-pixel segment id.
std::vector<int> segment_image(const Tensor& image, double k, int min_segment,
                               int* num_segments = nullptr);

// Segment boxes + adjacent-pair union boxes + multi-scale sliding grid,
// deduplicated, clipped, small boxes dropped, capped by seeded subsample.
std::vector<Box> generate_proposals(const Tensor& image,
                                    const ProposalParams& params);

}  // namespace weakseg
