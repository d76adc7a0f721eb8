#pragma once

#include <vector>

#include "weakseg/net.hpp"

namespace weakseg {

// Column-wise softmax over proposals (max-subtracted): w_ij = e^x_ij / sum_i.
Tensor normalize_weights(const Tensor& x_p);

struct ImagePrediction {
  Tensor w_p;    // (R,C) normalized weights
  Tensor gated;  // (R,C) x^1 = x_c_fg ⊙ w_p
  std::vector<double> s;      // per-class summed scores
  std::vector<double> p_hat;  // softmax(s)
};

// x_c carries C+1 columns (foreground classes then background); only the
// C foreground columns take part in MIL aggregation.
ImagePrediction aggregate_scores(const Tensor& x_c, const Tensor& x_p);

// Eq-style multi-label loss: -sum_k y_k log max(p_hat_k, 1e-12).
// Optional gradients wrt the raw branch outputs x_c and x_p.
double mil_loss(const Tensor& x_c, const Tensor& x_p,
                const std::vector<int>& y, Tensor* grad_xc = nullptr,
                Tensor* grad_xp = nullptr);

// Mean softmax cross-entropy over C+1 columns; target_cols entries are
// column indices in [0, C] or -1 to exclude the row. Empty set -> 0.
double proposal_class_loss(const Tensor& logits,
                           const std::vector<int>& target_cols,
                           Tensor* grad_logits = nullptr);

// Two shared fc layers over roi features plus parallel classification and
// weight branches.
struct MilModule {
  int num_classes = 0;
  Network trunk;     // roi-pool + fc6/relu + fc7/relu
  Network cls_head;  // fc -> C+1
  Network wgt_head;  // fc -> C

  MilModule() = default;
  MilModule(int classes, int feat_channels, int roi_grid, int feature_stride,
            int hidden, Rng& rng);

  struct Forward {
    Tensor features;  // (R, hidden)
    Tensor x_c;       // (R, C+1)
    Tensor x_p;       // (R, C)
  };
  Forward forward(const Tensor& backbone_feat, const std::vector<Box>& rois);
  // Backward through both branches and the trunk; returns the gradient wrt
  // the backbone feature map. Parameter gradients accumulate.
  Tensor backward(const Tensor& grad_xc, const Tensor& grad_xp);

  std::vector<Param*> params();
  void register_params(ParamRegistry& reg, const std::string& prefix);
};

}  // namespace weakseg
