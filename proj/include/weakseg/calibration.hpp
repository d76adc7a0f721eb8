#pragma once

#include <vector>

#include "weakseg/densecrf.hpp"
#include "weakseg/instances.hpp"
#include "weakseg/mil.hpp"

namespace weakseg {

// Per-class NMS winner plus the group of proposals it suppressed. When no
// proposal scores positive the top scorer is still emitted, flagged.
struct WinnerSelection {
  int winner = -1;
  std::vector<int> group;
  bool low_confidence = false;
};
WinnerSelection select_winner(const std::vector<Box>& proposals,
                              const std::vector<double>& class_scores,
                              double nms_threshold);

// Bilinearly resizes the channel-summed roi relevance grid into the box
// region of an H×W map (zero elsewhere).
Tensor splat_roi_relevance(const Tensor& rel_roi, const Box& box, int height,
                           int width);

// Pixel-wise sum of the group's proposal attention maps, max-normalized
// to [0,1] (left untouched when identically zero).
Tensor build_instance_attention(const std::vector<const Tensor*>& maps);

// A0 = max(0, 1 - sum_l y_l A_l)
Tensor background_map(const std::vector<Tensor>& class_maps,
                      const std::vector<int>& labels);

// Pixel-wise sum of scores over boxes whose argmax class equals cls,
// max-normalized.
Tensor object_heatmap(const std::vector<Box>& boxes,
                      const std::vector<double>& scores,
                      const std::vector<int>& argmax_cls, int cls, int height,
                      int width);

// Confident map = sqrt(A ⊙ H); binary CRF; mask support clamped to the
// union of the group boxes dilated by the appearance kernel width. Empty
// foreground falls back to the winner box with a rectangular mask.
InstanceHypothesis fuse_and_segment(const Tensor& inst_attention,
                                    const Tensor& heatmap, const Tensor& image,
                                    const CrfParams& crf, int cls,
                                    double winner_score, const Box& winner_box,
                                    const std::vector<Box>& group_boxes);

struct CalibrationConfig {
  double nms_threshold = 0.3;
  CrfParams crf;
};

// Excitation-BP proposal attention maps for the given proposal rows of a
// MIL forward pass (each proposal excited at its own argmax class).
std::vector<Tensor> proposal_attention_maps(MilModule& mil,
                                            const std::vector<Box>& rois,
                                            const Tensor& x_c,
                                            const std::vector<int>& rows,
                                            int height, int width);

// Full per-image proposal calibration for the classification stage: one
// instance per class present in `labels` (entries in {0,1} per class).
PseudoLabelSet calibrate_image(MilModule& mil, const Tensor& backbone_feat,
                               const Tensor& image,
                               const std::vector<Box>& proposals,
                               const std::vector<int>& labels,
                               const CalibrationConfig& config);

}  // namespace weakseg
