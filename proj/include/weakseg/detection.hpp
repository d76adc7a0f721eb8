#pragma once

#include <array>
#include <optional>
#include <vector>

#include "weakseg/calibration.hpp"
#include "weakseg/instances.hpp"
#include "weakseg/net.hpp"

namespace weakseg {

struct AnchorParams {
  std::vector<double> scales = {8, 16, 32};
  std::vector<double> ratios = {0.5, 1.0, 2.0};
  int stride = 4;
};

// One anchor per (position, scale, ratio); index = (y*W + x)*k + a with
// a = scale-major over (scale, ratio).
std::vector<Box> make_anchors(int feat_h, int feat_w, const AnchorParams& p);

struct AnchorMatch {
  std::vector<int> sampled;                       // anchor indices
  std::vector<int> labels;                        // +1 positive, 0 negative
  std::vector<std::array<double, 4>> targets;     // positives only (others 0)
  std::vector<double> weights;                    // inherited w*, 0 for neg
};

// IoU >= pos_thresh (or best anchor per pseudo box) -> positive; max IoU
// <= neg_thresh -> negative; rest ignored. Samples num_pos + num_neg with
// shortfall filled from the other pool. Throws on an empty pseudo set.
AnchorMatch match_anchors(const std::vector<Box>& anchors,
                          const PseudoLabelSet& pseudo, int img_w, int img_h,
                          Rng& rng, int num_pos = 32, int num_neg = 32,
                          double pos_thresh = 0.7, double neg_thresh = 0.3);

// Eq-style weighted RPN loss. labels: +1/0 objectness targets. Gradients
// are wrt the objectness logits and the offset predictions.
double rpn_loss(const std::vector<double>& obj_logits,
                const std::vector<std::array<double, 4>>& offsets,
                const AnchorMatch& match, double lambda,
                std::vector<double>* grad_obj = nullptr,
                std::vector<std::array<double, 4>>* grad_off = nullptr);

// Weighted RCNN loss; cls_logits (N, C+1) with column 0 = background,
// target_cls in {0..C}; regression for foreground rows only.
double rcnn_loss(const Tensor& cls_logits,
                 const std::vector<std::array<double, 4>>& offsets,
                 const std::vector<int>& target_cls,
                 const std::vector<std::array<double, 4>>& targets,
                 const std::vector<double>& weights, double lambda,
                 Tensor* grad_cls = nullptr,
                 std::vector<std::array<double, 4>>* grad_off = nullptr);

double smooth_l1(const std::array<double, 4>& pred,
                 const std::array<double, 4>& target,
                 std::array<double, 4>* grad = nullptr);

struct DetectionConfig {
  AnchorParams anchors;
  double lambda = 1.0;
  int rpn_pos = 32, rpn_neg = 32;
  int rcnn_fg = 16, rcnn_bg = 16;
  int top_n = 100;            // RPN proposals kept at inference
  double nms_threshold = 0.5;
  double score_threshold = 0.05;
  double fg_iou = 0.5;
  double bg_iou_lo = 0.1;
};

// Faster-RCNN style detector head over a shared backbone feature map.
struct DetectionModule {
  int num_classes = 0;
  int feat_stride = 4;
  DetectionConfig config;

  Network head;        // dilated conv block
  Network rpn_trunk;   // 3x3 conv + relu
  Network rpn_obj;     // 1x1 conv -> k objectness logits
  Network rpn_reg;     // 1x1 conv -> 4k offsets
  Network rcnn_trunk;  // roi-pool 7x7 + fc/relu + fc/relu
  Network rcnn_cls;    // fc -> C+1 (column 0 = background)
  Network rcnn_reg;    // fc -> 4 (class-agnostic)

  DetectionModule() = default;
  DetectionModule(int classes, int feat_channels, int stride, int hidden,
                  Rng& rng, const DetectionConfig& cfg);

  struct StepResult {
    double rpn = 0.0, rcnn = 0.0;
    Tensor backbone_grad;  // gradient wrt the backbone feature map
    bool skipped = false;  // empty pseudo set
  };
  // One forward/backward pass on a single image; parameter gradients
  // accumulate, the caller applies the optimizer step.
  StepResult train_step(const Tensor& backbone_feat,
                        const PseudoLabelSet& pseudo, int img_w, int img_h,
                        Rng& rng);

  std::vector<Detection> infer(const Tensor& backbone_feat, int img_w,
                               int img_h);

  // Calibration on the RCNN head: every post-NMS detection becomes an
  // instance (S^2, T^2, W^2).
  PseudoLabelSet dense_calibration(const Tensor& backbone_feat,
                                   const Tensor& image,
                                   const CalibrationConfig& calib);

  std::vector<Param*> params();
  void register_params(ParamRegistry& reg, const std::string& prefix);

  // internal: RPN forward + top-N decoded proposals (no gradient path)
  std::vector<Box> rpn_proposals(const Tensor& head_feat, int img_w, int img_h,
                                 int top_n);
};

}  // namespace weakseg
