#pragma once

#include <map>
#include <string>
#include <vector>

#include "weakseg/boxes.hpp"
#include "weakseg/data.hpp"
#include "weakseg/instances.hpp"

namespace weakseg {

// A box or mask prediction attributed to one image of the split.
struct PredInstance {
  int image = 0;  // index into the sample list
  int cls = 0;    // 1..C
  Box box;
  double score = 0.0;
  Tensor mask;  // (H, W) soft; empty for box-only predictions
};

struct ApResult {
  std::map<int, double> per_class;  // classes with at least one GT instance
  double mean = 0.0;                // mean over defined classes (0 if none)
};

// VOC-style AP with continuous precision-envelope area; greedy matching of
// score-ranked detections (ties by index) to unmatched GT at IoU >= thr.
ApResult voc_map(const std::vector<PredInstance>& dets,
                 const std::vector<Sample>& gts, double iou_threshold,
                 int num_classes);

// Fraction of images containing class c whose top-scored candidate for c
// localizes a GT box of c with IoU strictly greater than 0.5.
ApResult corloc(const std::vector<PredInstance>& top1,
                const std::vector<Sample>& gts, int num_classes);

// Semantic mIoU over C+1 classes (0 = background); predictions flattened to
// per-pixel argmax-score semantic maps. Classes absent from both sides are
// excluded from the mean.
ApResult miou(const std::vector<PredInstance>& preds,
              const std::vector<Sample>& gts, int num_classes);

// voc_map with mask IoU (masks binarized at 0.5) instead of box IoU.
ApResult map_r(const std::vector<PredInstance>& preds,
               const std::vector<Sample>& gts, double iou_threshold,
               int num_classes);

// Mean over GT instances of the best mask IoU by any same-class prediction.
double abo(const std::vector<PredInstance>& preds,
           const std::vector<Sample>& gts);

double mask_iou(const Tensor& a, const Tensor& b);

struct EvalReport {
  ApResult det_map;    // box mAP at 0.5
  ApResult corloc;     // strict > 0.5
  ApResult seg_miou;   // C+1 classes
  std::map<double, ApResult> map_r;  // keyed by IoU threshold
  double abo = 0.0;
  int num_classes = 0;

  std::string to_csv() const;
  std::string to_text() const;
};

}  // namespace weakseg
