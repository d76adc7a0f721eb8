#pragma once

#include <string>
#include <vector>

#include "weakseg/boxes.hpp"
#include "weakseg/tensor.hpp"

namespace weakseg {

struct GtInstance {
  int cls = 0;   // 1..C
  Box box;
  Tensor mask;   // (H, W) binary
};

struct Sample {
  std::string id;             // e.g. "0000"
  Tensor image;               // (3, H, W) in [0,1]
  std::vector<int> labels;    // binary C-vector y_I
  std::vector<GtInstance> gt; // evaluation only
};

struct SynthParams {
  int num_classes = 3;  // circle, square, triangle
  int size = 64;
  int min_shape = 10, max_shape = 28;
  int min_instances = 1, max_instances = 3;
  double max_mutual_iou = 0.3;  // easy split
};

// Deterministic synthetic shapes dataset: value-noise background, 1-3
// colored shapes per image; y_I is the union of instance classes and the
// ground-truth masks are exact by construction.
std::vector<Sample> gen_synthetic(int n, uint64_t seed,
                                  const SynthParams& params = {});

// Row-major run lengths alternating background/foreground, starting with
// background (a leading foreground pixel yields a first run of 0).
std::vector<int> mask_to_rle(const Tensor& mask);
Tensor rle_to_mask(const std::vector<int>& rle, int height, int width);

// Disk layout: <dir>/images/NNNN.png plus <dir>/annotations.jsonl with one
// line per image: {"image", "labels", "instances":[{"class","box","mask_rle"}]}.
void save_dataset(const std::string& dir, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::string& dir);

}  // namespace weakseg
