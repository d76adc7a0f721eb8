#include "weakseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace weakseg {

namespace {

// continuous AP: area under the precision envelope of the PR curve
double ap_from_matches(const std::vector<char>& is_tp, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (char t : is_tp) {
    if (t)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    double env = precision[i];  // precision envelope: max over the suffix
    for (size_t j = i + 1; j < precision.size(); ++j)
      env = std::max(env, precision[j]);
    ap += env * (recall[i] - prev_recall);
    prev_recall = recall[i];
  }
  return ap;
}

// shared matcher for box and mask AP
ApResult generic_map(const std::vector<PredInstance>& dets,
                     const std::vector<Sample>& gts, double iou_threshold,
                     int num_classes, bool use_mask) {
  ApResult res;
  int defined = 0;
  double sum = 0.0;
  for (int c = 1; c <= num_classes; ++c) {
    int num_gt = 0;
    for (const Sample& s : gts)
      for (const GtInstance& gi : s.gt)
        if (gi.cls == c) ++num_gt;
    if (num_gt == 0) continue;  // AP undefined for classes with no GT

    std::vector<int> order;
    for (size_t i = 0; i < dets.size(); ++i)
      if (dets[i].cls == c) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return dets[a].score > dets[b].score;
    });

    std::vector<std::vector<char>> matched(gts.size());
    for (size_t s = 0; s < gts.size(); ++s)
      matched[s].assign(gts[s].gt.size(), 0);

    std::vector<char> is_tp;
    for (int di : order) {
      const PredInstance& d = dets[di];
      double best = 0.0;
      int best_gi = -1;
      const Sample& s = gts[d.image];
      for (size_t gi = 0; gi < s.gt.size(); ++gi) {
        if (s.gt[gi].cls != c || matched[d.image][gi]) continue;
        const double v = use_mask ? mask_iou(d.mask, s.gt[gi].mask)
                                  : iou(d.box, s.gt[gi].box);
        if (v > best) {
          best = v;
          best_gi = static_cast<int>(gi);
        }
      }
      if (best >= iou_threshold && best_gi >= 0) {
        matched[d.image][best_gi] = 1;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }
    const double ap = ap_from_matches(is_tp, num_gt);
    res.per_class[c] = ap;
    sum += ap;
    ++defined;
  }
  res.mean = defined ? sum / defined : 0.0;
  return res;
}

}  // namespace

double mask_iou(const Tensor& a, const Tensor& b) {
  if (a.numel() == 0 || b.numel() == 0 || a.numel() != b.numel()) return 0.0;
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] >= 0.5, pb = b.data[i] >= 0.5;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

ApResult voc_map(const std::vector<PredInstance>& dets,
                 const std::vector<Sample>& gts, double iou_threshold,
                 int num_classes) {
  return generic_map(dets, gts, iou_threshold, num_classes, false);
}

ApResult map_r(const std::vector<PredInstance>& preds,
               const std::vector<Sample>& gts, double iou_threshold,
               int num_classes) {
  return generic_map(preds, gts, iou_threshold, num_classes, true);
}

ApResult corloc(const std::vector<PredInstance>& top1,
                const std::vector<Sample>& gts, int num_classes) {
  ApResult res;
  int defined = 0;
  double sum = 0.0;
  for (int c = 1; c <= num_classes; ++c) {
    int images_with_c = 0, localized = 0;
    for (size_t si = 0; si < gts.size(); ++si) {
      bool has_c = false;
      for (const GtInstance& gi : gts[si].gt) has_c |= gi.cls == c;
      if (!has_c) continue;
      ++images_with_c;
      // top candidate for (image, class): highest score, ties by index
      const PredInstance* best = nullptr;
      for (const PredInstance& p : top1)
        if (p.image == static_cast<int>(si) && p.cls == c &&
            (!best || p.score > best->score))
          best = &p;
      if (!best) continue;
      for (const GtInstance& gi : gts[si].gt)
        if (gi.cls == c && iou(best->box, gi.box) > 0.5) {
          ++localized;
          break;
        }
    }
    if (images_with_c == 0) continue;
    const double v = static_cast<double>(localized) / images_with_c;
    res.per_class[c] = v;
    sum += v;
    ++defined;
  }
  res.mean = defined ? sum / defined : 0.0;
  return res;
}

ApResult miou(const std::vector<PredInstance>& preds,
              const std::vector<Sample>& gts, int num_classes) {
  // per-pixel argmax-score semantic maps, accumulated over the whole split
  std::vector<int64_t> inter(num_classes + 1, 0), uni(num_classes + 1, 0);
  std::vector<int64_t> pred_count(num_classes + 1, 0), gt_count(num_classes + 1, 0);

  for (size_t si = 0; si < gts.size(); ++si) {
    const Sample& s = gts[si];
    const int h = s.image.dim(1), w = s.image.dim(2);
    std::vector<int> pred_map(static_cast<size_t>(h) * w, 0);
    std::vector<double> pred_score(static_cast<size_t>(h) * w, 0.0);
    for (const PredInstance& p : preds) {
      if (p.image != static_cast<int>(si) || p.mask.numel() == 0) continue;
      for (size_t i = 0; i < p.mask.data.size(); ++i)
        if (p.mask.data[i] >= 0.5 && p.score > pred_score[i]) {
          pred_map[i] = p.cls;
          pred_score[i] = p.score;
        }
    }
    std::vector<int> gt_map(static_cast<size_t>(h) * w, 0);
    for (const GtInstance& gi : s.gt)
      for (size_t i = 0; i < gi.mask.data.size(); ++i)
        if (gi.mask.data[i] >= 0.5) gt_map[i] = gi.cls;

    for (size_t i = 0; i < pred_map.size(); ++i) {
      const int pc = pred_map[i], gc = gt_map[i];
      ++pred_count[pc];
      ++gt_count[gc];
      if (pc == gc) {
        ++inter[pc];
        ++uni[pc];
      } else {
        ++uni[pc];
        ++uni[gc];
      }
    }
  }

  ApResult res;
  int defined = 0;
  double sum = 0.0;
  for (int c = 0; c <= num_classes; ++c) {
    if (pred_count[c] == 0 && gt_count[c] == 0) continue;  // absent everywhere
    const double v = uni[c] ? static_cast<double>(inter[c]) / uni[c] : 0.0;
    res.per_class[c] = v;
    sum += v;
    ++defined;
  }
  res.mean = defined ? sum / defined : 0.0;
  return res;
}

double abo(const std::vector<PredInstance>& preds,
           const std::vector<Sample>& gts) {
  double sum = 0.0;
  int count = 0;
  for (size_t si = 0; si < gts.size(); ++si)
    for (const GtInstance& gi : gts[si].gt) {
      double best = 0.0;
      for (const PredInstance& p : preds)
        if (p.image == static_cast<int>(si) && p.cls == gi.cls &&
            p.mask.numel() > 0)
          best = std::max(best, mask_iou(p.mask, gi.mask));
      sum += best;
      ++count;
    }
  return count ? sum / count : 0.0;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "class,ap50,corloc,iou";
  for (const auto& [thr, r] : map_r) os << ",ap_r" << thr;
  os << "\n";
  for (int c = 0; c <= num_classes; ++c) {
    bool any = seg_miou.per_class.count(c) || det_map.per_class.count(c) ||
               corloc.per_class.count(c);
    for (const auto& [thr, r] : map_r) any |= r.per_class.count(c) > 0;
    if (!any) continue;
    auto cell = [&](const ApResult& r) {
      if (r.per_class.count(c))
        os << r.per_class.at(c);
    };
    os << c << ",";
    cell(det_map);
    os << ",";
    cell(corloc);
    os << ",";
    cell(seg_miou);
    for (const auto& [thr, r] : map_r) {
      os << ",";
      cell(r);
    }
    os << "\n";
  }
  os << "mean," << det_map.mean << "," << corloc.mean << "," << seg_miou.mean;
  for (const auto& [thr, r] : map_r) os << "," << r.mean;
  os << "\n";
  os << "abo," << abo << ",,";
  for (size_t i = 0; i < map_r.size(); ++i) os << ",";
  os << "\n";
  return os.str();
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "detection mAP@0.5: " << det_map.mean << "\n";
  os << "CorLoc:            " << corloc.mean << "\n";
  os << "semantic mIoU:     " << seg_miou.mean << "\n";
  for (const auto& [thr, r] : map_r)
    os << "mAP^r@" << thr << ":         " << r.mean << "\n";
  os << "ABO:               " << abo << "\n";
  return os.str();
}

}  // namespace weakseg
