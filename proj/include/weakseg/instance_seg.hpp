#pragma once

#include <vector>

#include "weakseg/densecrf.hpp"
#include "weakseg/detection.hpp"
#include "weakseg/instances.hpp"

namespace weakseg {

// Weighted per-roi mask loss: mean over matched rois of
// w_i * mean-per-pixel BCE on the matched class channel only.
// pred_logits[i] is (C, g, g); targets[i] is (g, g) binary; cls in 1..C with
// cls <= 0 meaning "matched to no pseudo instance" (excluded). Gradients are
// wrt the logits of included rois (excluded rois get zero grads).
double mask_loss(const std::vector<Tensor>& pred_logits,
                 const std::vector<Tensor>& targets,
                 const std::vector<int>& cls,
                 const std::vector<double>& weights,
                 std::vector<Tensor>* grads = nullptr);

// Crops `mask` (H, W) to `box`, bilinearly resamples to (g, g).
Tensor crop_resize_mask(const Tensor& mask, const Box& box, int g);

// Bilinearly upsamples a (g, g) grid into the box region of an (H, W) map,
// zero outside the box.
Tensor paste_mask(const Tensor& grid, const Box& box, int height, int width);

// Detection heads plus an ASPP-style mask branch (14x14 roi features, four
// dilated conv branches d = 1,2,4,6 concatenated, 1x1 conv to C channels).
// Used for both the instance refinement and instance segmentation stages.
struct InstanceModule {
  DetectionModule det;
  RoiPool mask_pool{14, 4};
  std::vector<Network> branches;  // conv(3x3, dilation d) + relu, 4 branches
  Network mask_out;               // 1x1 conv -> C channels
  int num_classes = 0;

  InstanceModule() = default;
  InstanceModule(int classes, int feat_channels, int stride, int hidden,
                 Rng& rng, const DetectionConfig& cfg);

  struct StepResult {
    double rpn = 0.0, rcnn = 0.0, mask = 0.0;
    Tensor backbone_grad;
    bool skipped = false;
  };
  StepResult train_step(const Tensor& backbone_feat,
                        const PseudoLabelSet& pseudo, int img_w, int img_h,
                        Rng& rng);

  // Detection path then the mask head per kept detection; masks are soft
  // [0,1] values pasted inside the detection box; weight = sigmoid(score).
  PseudoLabelSet instance_infer(const Tensor& backbone_feat,
                                const Tensor& image);

  std::vector<Param*> params();
  void register_params(ParamRegistry& reg, const std::string& prefix);

 private:
  // (C, g, g) mask logits for one pooled roi slice, with backward support.
  Tensor mask_forward(const Tensor& roi_feat);
  Tensor mask_backward(const Tensor& grad_logits);
};

// Same-class hypotheses whose boxes overlap (IoU > nms_threshold) are
// pixel-summed and max-normalized into a confident map; a binary CRF is run
// per group and each hypothesis is re-cut from the refined foreground.
PseudoLabelSet refine_with_crf(const PseudoLabelSet& hypotheses,
                               const Tensor& image, const CrfParams& crf,
                               double nms_threshold = 0.5);

}  // namespace weakseg
