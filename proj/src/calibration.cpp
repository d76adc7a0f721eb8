#include "weakseg/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "weakseg/excitation.hpp"

namespace weakseg {

WinnerSelection select_winner(const std::vector<Box>& proposals,
                              const std::vector<double>& class_scores,
                              double nms_threshold) {
  if (proposals.empty())
    throw std::invalid_argument("select_winner: no proposals");
  const NmsResult r = nms(proposals, class_scores, nms_threshold);
  WinnerSelection sel;
  sel.winner = r.kept[0];
  sel.group = r.suppressed[0];
  sel.low_confidence = class_scores[sel.winner] <= 0.0;
  return sel;
}

Tensor splat_roi_relevance(const Tensor& rel_roi, const Box& box, int height,
                           int width) {
  if (rel_roi.ndim() != 3)
    throw std::invalid_argument("splat_roi_relevance: need (C,g,g)");
  const int g = rel_roi.dim(1);
  // channel sum
  std::vector<double> grid(static_cast<size_t>(g) * g, 0.0);
  for (int c = 0; c < rel_roi.dim(0); ++c)
    for (int i = 0; i < g * g; ++i) grid[i] += rel_roi.data[c * g * g + i];

  Tensor map({height, width});
  const Box b = box.clipped(width, height);
  const int x1 = static_cast<int>(std::floor(b.x1));
  const int y1 = static_cast<int>(std::floor(b.y1));
  const int x2 = std::max(x1 + 1, static_cast<int>(std::ceil(b.x2)));
  const int y2 = std::max(y1 + 1, static_cast<int>(std::ceil(b.y2)));
  const int bw = std::min(x2, width) - x1;
  const int bh = std::min(y2, height) - y1;
  for (int ty = 0; ty < bh; ++ty) {
    const double sy = (ty + 0.5) * g / bh - 0.5;
    const int sy0 = std::clamp(static_cast<int>(std::floor(sy)), 0, g - 1);
    const int sy1 = std::min(sy0 + 1, g - 1);
    const double fy = std::clamp(sy - sy0, 0.0, 1.0);
    for (int tx = 0; tx < bw; ++tx) {
      const double sx = (tx + 0.5) * g / bw - 0.5;
      const int sx0 = std::clamp(static_cast<int>(std::floor(sx)), 0, g - 1);
      const int sx1 = std::min(sx0 + 1, g - 1);
      const double fx = std::clamp(sx - sx0, 0.0, 1.0);
      const double v = (1 - fy) * ((1 - fx) * grid[sy0 * g + sx0] +
                                   fx * grid[sy0 * g + sx1]) +
                       fy * ((1 - fx) * grid[sy1 * g + sx0] +
                             fx * grid[sy1 * g + sx1]);
      map.data[(y1 + ty) * width + (x1 + tx)] = v;
    }
  }
  return map;
}

Tensor build_instance_attention(const std::vector<const Tensor*>& maps) {
  if (maps.empty())
    throw std::invalid_argument("build_instance_attention: no maps");
  Tensor out(maps[0]->shape);
  for (const Tensor* m : maps)
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += m->data[i];
  double mx = 0.0;
  for (double v : out.data) mx = std::max(mx, v);
  if (mx > 0)
    for (double& v : out.data) v /= mx;
  return out;
}

Tensor background_map(const std::vector<Tensor>& class_maps,
                      const std::vector<int>& labels) {
  if (class_maps.size() != labels.size())
    throw std::invalid_argument("background_map: size mismatch");
  if (class_maps.empty())
    throw std::invalid_argument("background_map: no class maps");
  Tensor out(class_maps[0].shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < class_maps.size(); ++c)
      if (labels[c]) acc += class_maps[c].data[i];
    out.data[i] = std::max(0.0, 1.0 - acc);
  }
  return out;
}

Tensor object_heatmap(const std::vector<Box>& boxes,
                      const std::vector<double>& scores,
                      const std::vector<int>& argmax_cls, int cls, int height,
                      int width) {
  Tensor out({height, width});
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (argmax_cls[i] != cls) continue;
    const Box b = boxes[i].clipped(width, height);
    const int x1 = static_cast<int>(std::floor(b.x1));
    const int y1 = static_cast<int>(std::floor(b.y1));
    const int x2 = std::min(width, static_cast<int>(std::ceil(b.x2)));
    const int y2 = std::min(height, static_cast<int>(std::ceil(b.y2)));
    for (int y = y1; y < y2; ++y)
      for (int x = x1; x < x2; ++x) out.data[y * width + x] += scores[i];
  }
  double mx = 0.0;
  for (double& v : out.data) {
    if (v < 0) v = 0.0;  // raw scores may be negative logits
    mx = std::max(mx, v);
  }
  if (mx > 0)
    for (double& v : out.data) v /= mx;
  return out;
}

InstanceHypothesis fuse_and_segment(const Tensor& inst_attention,
                                    const Tensor& heatmap, const Tensor& image,
                                    const CrfParams& crf, int cls,
                                    double winner_score, const Box& winner_box,
                                    const std::vector<Box>& group_boxes) {
  const int h = inst_attention.dim(0), w = inst_attention.dim(1);
  Tensor confident({h, w});
  for (int i = 0; i < h * w; ++i)
    confident.data[i] =
        std::sqrt(inst_attention.data[i] * heatmap.data[i]);

  InstanceHypothesis inst;
  inst.cls = cls;
  inst.weight = 1.0 / (1.0 + std::exp(-winner_score));

  // support region: union of group boxes dilated by the appearance width
  const double dil = crf.theta_alpha;
  Box support = winner_box;
  for (const Box& b : group_boxes) {
    support.x1 = std::min(support.x1, b.x1);
    support.y1 = std::min(support.y1, b.y1);
    support.x2 = std::max(support.x2, b.x2);
    support.y2 = std::max(support.y2, b.y2);
  }
  support.x1 -= dil;
  support.y1 -= dil;
  support.x2 += dil;
  support.y2 += dil;
  support = support.clipped(w, h);

  const Tensor unary = unary_from_confident_map(confident);
  const Tensor marginals = mean_field(unary, image, crf);

  Tensor mask({h, w});
  int fx1 = w, fy1 = h, fx2 = -1, fy2 = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x < support.x1 || x >= support.x2 || y < support.y1 ||
          y >= support.y2)
        continue;
      const double m = marginals.data[h * w + y * w + x];  // fg channel
      mask.data[y * w + x] = m;
      if (m >= 0.5) {
        fx1 = std::min(fx1, x);
        fy1 = std::min(fy1, y);
        fx2 = std::max(fx2, x);
        fy2 = std::max(fy2, y);
      }
    }

  if (fx2 < 0) {  // empty foreground: fall back to the winner box
    inst.low_confidence = true;
    inst.box = winner_box.clipped(w, h);
    inst.mask = Tensor({h, w});
    for (int y = static_cast<int>(inst.box.y1); y < inst.box.y2; ++y)
      for (int x = static_cast<int>(inst.box.x1); x < inst.box.x2; ++x)
        inst.mask.data[y * w + x] = 1.0;
    return inst;
  }
  inst.box = {static_cast<double>(fx1), static_cast<double>(fy1),
              static_cast<double>(fx2 + 1), static_cast<double>(fy2 + 1)};
  inst.mask = std::move(mask);
  return inst;
}

std::vector<Tensor> proposal_attention_maps(MilModule& mil,
                                            const std::vector<Box>& rois,
                                            const Tensor& x_c,
                                            const std::vector<int>& rows,
                                            int height, int width) {
  const int r = x_c.dim(0), cols = x_c.dim(1);
  const int cfg = cols - 1;  // foreground columns

  // start relevance: softmax over the class prediction, one-hot at the
  // foreground argmax
  Tensor start({r, cols});
  std::vector<char> wanted(r, 0);
  for (int row : rows) wanted[row] = 1;
  for (int i = 0; i < r; ++i) {
    if (!wanted[i]) continue;
    const double* xrow = x_c.data.data() + static_cast<int64_t>(i) * cols;
    double mx = xrow[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xrow[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) sum += std::exp(xrow[j] - mx);
    int arg = 0;
    for (int j = 1; j < cfg; ++j)
      if (xrow[j] > xrow[arg]) arg = j;
    start.data[static_cast<int64_t>(i) * cols + arg] =
        std::exp(xrow[arg] - mx) / sum;
  }

  std::vector<Layer*> path;
  for (const auto& l : mil.trunk.layers()) path.push_back(l.get());
  for (const auto& l : mil.cls_head.layers()) path.push_back(l.get());
  const Tensor rel = excitation_bp(path, start);  // (R, C, g, g)

  std::vector<Tensor> maps;
  maps.reserve(rows.size());
  const int ch = rel.dim(1), g = rel.dim(2);
  for (int row : rows) {
    Tensor roi_rel({ch, g, g});
    std::copy_n(rel.data.begin() + static_cast<int64_t>(row) * ch * g * g,
                static_cast<int64_t>(ch) * g * g, roi_rel.data.begin());
    maps.push_back(splat_roi_relevance(roi_rel, rois[row], height, width));
  }
  return maps;
}

PseudoLabelSet calibrate_image(MilModule& mil, const Tensor& backbone_feat,
                               const Tensor& image,
                               const std::vector<Box>& proposals,
                               const std::vector<int>& labels,
                               const CalibrationConfig& config) {
  const int h = image.dim(1), w = image.dim(2);
  const int c = mil.num_classes;
  const auto fwd = mil.forward(backbone_feat, proposals);
  const int r = static_cast<int>(proposals.size());
  // the gated scores x^1 = x_c ⊙ w_p carry the localization evidence; raw
  // classification logits are nearly uniform across proposals
  const ImagePrediction agg = aggregate_scores(fwd.x_c, fwd.x_p);

  // per-proposal foreground argmax for heat-maps
  std::vector<int> argmax_cls(r);
  std::vector<double> argmax_score(r);
  for (int i = 0; i < r; ++i) {
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (agg.gated.data[i * c + j] > agg.gated.data[i * c + arg]) arg = j;
    argmax_cls[i] = arg + 1;  // classes are 1-based
    argmax_score[i] = agg.gated.data[i * c + arg];
  }

  PseudoLabelSet out;
  for (int cl = 0; cl < c; ++cl) {
    if (!labels[cl]) continue;
    std::vector<double> col(r);
    for (int i = 0; i < r; ++i) col[i] = agg.gated.data[i * c + cl];
    const WinnerSelection sel = select_winner(proposals, col, config.nms_threshold);

    std::vector<int> rows = {sel.winner};
    for (int gidx : sel.group) rows.push_back(gidx);
    const std::vector<Tensor> maps =
        proposal_attention_maps(mil, proposals, fwd.x_c, rows, h, w);
    std::vector<const Tensor*> mptrs;
    for (const Tensor& m : maps) mptrs.push_back(&m);
    const Tensor attention = build_instance_attention(mptrs);
    const Tensor heat =
        object_heatmap(proposals, argmax_score, argmax_cls, cl + 1, h, w);

    std::vector<Box> group_boxes;
    for (int row : rows) group_boxes.push_back(proposals[row]);
    InstanceHypothesis inst =
        fuse_and_segment(attention, heat, image, config.crf, cl + 1,
                         col[sel.winner], proposals[sel.winner], group_boxes);
    inst.low_confidence = inst.low_confidence || sel.low_confidence;
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace weakseg
