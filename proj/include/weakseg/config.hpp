#pragma once

#include <map>
#include <string>
#include <vector>

#include "weakseg/calibration.hpp"
#include "weakseg/densecrf.hpp"
#include "weakseg/detection.hpp"
#include "weakseg/proposals.hpp"

namespace weakseg {

// Every knob of the training/inference pipeline; parsed from a flat
// `key = value` file (# comments) and overridable per key.
struct Config {
  uint64_t seed = 42;
  int threads = 1;

  // dataset
  int num_classes = 3;
  int image_size = 64;

  // backbone
  int backbone_channels = 64;
  int feat_stride = 4;
  int hidden = 256;  // fc width of the roi heads

  // optimization (per-stage iteration counts; lr drops to lr_low for the
  // final quarter of each stage)
  int cascade_iters = 400;
  // per-stage overrides; 0 falls back to cascade_iters. The MIL stage
  // needs far more (cheap) iterations than the detection heads.
  int cls_iters = 0;
  int det_iters = 0;
  int refine_iters = 0;
  int seg_iters = 0;
  int fb_iters = 150;
  double lr = 1e-3;
  double lr_low = 1e-4;
  double fb_lr = 1e-4;
  double momentum = 0.9;      // plain-SGD path only
  double weight_decay = 1e-5;  // L2 added to the Adam gradient
  int batch_size = 2;

  // forward-backward curriculum
  int refresh_interval = 75;  // R: pseudo-label refresh cadence
  double beta = 0.5;          // backward validation overlap (strict >)
  double bg_max_iou = 0.1;    // backward validation background cutoff

  // MIL training. The classification stage starts with a warm-up phase
  // where the bag is just the full-image box (|R| = 1 classification);
  // with near-uniform proposal weights at init, full bags dilute the
  // per-proposal gradient by 1/|R| and the heads barely move, so the
  // trunk is first made discriminative on whole images.
  int mil_proposals = 64;   // proposal subsample per training step
  int mil_warm_iters = 0;   // 0 = 40% of cascade_iters

  ProposalParams proposals;
  DetectionConfig detection;
  CalibrationConfig calibration;
  CrfParams crf_eval;  // CRF used at inference/refinement

  // Truncated CRF windows by default: radius 4 during training-time
  // calibration, radius 12 at evaluation. Radius 0 (exact, full window)
  // remains available via crf_train_radius / crf_eval_radius.
  Config() {
    calibration.crf.spatial_radius = 4;
    crf_eval.spatial_radius = 12;
  }

  std::map<std::string, std::string> extras;  // unrecognized keys (rejected)

  // Applies `key = value`; throws std::invalid_argument on unknown keys or
  // unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string to_json() const;  // resolved config for run.json
};

Config load_config(const std::string& path);
void apply_overrides(Config& cfg,
                     const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace weakseg
