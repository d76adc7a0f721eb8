#pragma once

#include <vector>

#include "weakseg/boxes.hpp"
#include "weakseg/tensor.hpp"

namespace weakseg {

// One hypothesized object instance: class in 1..C, soft mask over the
// full image, and a confidence weight in (0,1].
struct InstanceHypothesis {
  int cls = 0;
  Box box;
  Tensor mask;  // (H,W), values in [0,1]
  double weight = 1.0;
  bool low_confidence = false;
};

using PseudoLabelSet = std::vector<InstanceHypothesis>;

struct Detection {
  int cls = 0;  // 1..C
  Box box;
  double score = 0.0;
};

}  // namespace weakseg
