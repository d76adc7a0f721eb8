#pragma once

#include "weakseg/tensor.hpp"

namespace weakseg {

struct CrfParams {
  double w_appearance = 4.0;
  double w_smoothness = 3.0;
  double theta_alpha = 8.0;   // appearance spatial width (px)
  double theta_beta = 0.1;    // appearance color width (colors in [0,1])
  double theta_gamma = 3.0;   // smoothness spatial width (px)
  int iterations = 5;
  // 0 = exact dense pairwise sums over all pixel pairs; > 0 restricts the
  // pairwise sum to a square window of this radius (training speed knob).
  int spatial_radius = 0;
};

// Binary mean-field inference with Potts compatibility over a fully
// connected pixel graph. unary: (2,H,W) negative-log potentials,
// image: (C,H,W) with values in [0,1]. Returns (2,H,W) marginals.
Tensor mean_field(const Tensor& unary, const Tensor& image,
                  const CrfParams& params);

// Unary from a confident map M in [0,1]:
// fg = -log(max(M,eps)), bg = -log(max(1-M,eps)).
Tensor unary_from_confident_map(const Tensor& confident, double eps = 1e-6);

}  // namespace weakseg
