#pragma once

#include <vector>

#include "weakseg/net.hpp"

namespace weakseg {

// Positive-weight winner-take-all relevance propagation:
//   P_j = a_j * sum_i (w+_ji / Z_i) P_i,  Z_i = sum_k a_k w+_ki
// where a is the cached input activation of the layer (non-negative after
// relu) and terms with Z_i = 0 are dropped.
//
// `path` lists layers in forward order; relevance starts at the output of
// the last layer and propagates back to the *output* of the first roi-pool
// encountered (or to the first layer's input when none is present). All
// layers must hold cached activations from a prior forward pass. conv and
// pooling layers are not part of the calibration head and are rejected.
Tensor excitation_bp(const std::vector<Layer*>& path, const Tensor& start);

// Single fully-connected step of the rule above, exposed for tests:
// activations (N, in), relevance (N, out) -> (N, in).
Tensor excitation_fc(const FullyConnected& fc, const Tensor& activations,
                     const Tensor& relevance);

}  // namespace weakseg
