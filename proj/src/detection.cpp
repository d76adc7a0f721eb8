#include "weakseg/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "weakseg/excitation.hpp"

namespace weakseg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable BCE with logits; grad = sigmoid(x) - t
double bce_logit(double x, double t, double* grad) {
  const double loss = std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  if (grad) *grad = sigmoid(x) - t;
  return loss;
}

template <typename T>
void sample_pool(std::vector<T>& pool, int want, Rng& rng, std::vector<T>* out) {
  for (int i = 0; i < want && i < static_cast<int>(pool.size()); ++i) {
    const int j = i + rng.uniform_int(0, static_cast<int>(pool.size()) - 1 - i);
    std::swap(pool[i], pool[j]);
    out->push_back(pool[i]);
  }
}

}  // namespace

std::vector<Box> make_anchors(int feat_h, int feat_w, const AnchorParams& p) {
  std::vector<Box> anchors;
  anchors.reserve(static_cast<size_t>(feat_h) * feat_w * p.scales.size() *
                  p.ratios.size());
  for (int y = 0; y < feat_h; ++y)
    for (int x = 0; x < feat_w; ++x) {
      const double cx = (x + 0.5) * p.stride;
      const double cy = (y + 0.5) * p.stride;
      for (double s : p.scales)
        for (double r : p.ratios) {
          const double w = s * std::sqrt(r);
          const double h = s / std::sqrt(r);
          anchors.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
        }
    }
  return anchors;
}

AnchorMatch match_anchors(const std::vector<Box>& anchors,
                          const PseudoLabelSet& pseudo, int img_w, int img_h,
                          Rng& rng, int num_pos, int num_neg,
                          double pos_thresh, double neg_thresh) {
  if (pseudo.empty())
    throw std::invalid_argument("match_anchors: empty pseudo set");
  const int n = static_cast<int>(anchors.size());
  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<int> gt_best_anchor(pseudo.size(), -1);
  std::vector<double> gt_best_iou(pseudo.size(), -1.0);

  for (int i = 0; i < n; ++i) {
    const Box a = anchors[i].clipped(img_w, img_h);
    if (a.w() <= 0 || a.h() <= 0) continue;
    for (size_t g = 0; g < pseudo.size(); ++g) {
      const double v = iou(a, pseudo[g].box);
      if (v > best_iou[i]) {
        best_iou[i] = v;
        best_gt[i] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = i;
      }
    }
  }

  std::vector<char> is_pos(n, 0);
  for (int i = 0; i < n; ++i)
    if (best_iou[i] >= pos_thresh && best_gt[i] >= 0) is_pos[i] = 1;
  for (size_t g = 0; g < pseudo.size(); ++g)
    if (gt_best_anchor[g] >= 0) {
      is_pos[gt_best_anchor[g]] = 1;
      if (best_gt[gt_best_anchor[g]] < 0)
        best_gt[gt_best_anchor[g]] = static_cast<int>(g);
    }

  std::vector<int> pos_pool, neg_pool;
  for (int i = 0; i < n; ++i) {
    if (is_pos[i])
      pos_pool.push_back(i);
    else if (best_iou[i] <= neg_thresh)
      neg_pool.push_back(i);
  }

  std::vector<int> pos, neg;
  sample_pool(pos_pool, num_pos, rng, &pos);
  sample_pool(neg_pool, num_neg, rng, &neg);
  // shortfall filled from the other pool
  int missing_pos = num_pos - static_cast<int>(pos.size());
  int missing_neg = num_neg - static_cast<int>(neg.size());
  if (missing_pos > 0) {
    std::vector<int> extra(neg_pool.begin() + neg.size(), neg_pool.end());
    sample_pool(extra, missing_pos, rng, &neg);
  }
  if (missing_neg > 0) {
    std::vector<int> extra(pos_pool.begin() + pos.size(), pos_pool.end());
    sample_pool(extra, missing_neg, rng, &pos);
  }

  AnchorMatch m;
  for (int i : pos) {
    m.sampled.push_back(i);
    m.labels.push_back(1);
    const Box a = anchors[i].clipped(img_w, img_h);
    m.targets.push_back(encode_box(a, pseudo[best_gt[i]].box));
    m.weights.push_back(pseudo[best_gt[i]].weight);
  }
  for (int i : neg) {
    m.sampled.push_back(i);
    m.labels.push_back(0);
    m.targets.push_back({0, 0, 0, 0});
    m.weights.push_back(0.0);
  }
  return m;
}

double smooth_l1(const std::array<double, 4>& pred,
                 const std::array<double, 4>& target,
                 std::array<double, 4>* grad) {
  double loss = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double d = pred[j] - target[j];
    if (std::abs(d) < 1.0) {
      loss += 0.5 * d * d;
      if (grad) (*grad)[j] = d;
    } else {
      loss += std::abs(d) - 0.5;
      if (grad) (*grad)[j] = d > 0 ? 1.0 : -1.0;
    }
  }
  return loss;
}

double rpn_loss(const std::vector<double>& obj_logits,
                const std::vector<std::array<double, 4>>& offsets,
                const AnchorMatch& match, double lambda,
                std::vector<double>* grad_obj,
                std::vector<std::array<double, 4>>* grad_off) {
  const int n = static_cast<int>(match.sampled.size());
  if (static_cast<int>(obj_logits.size()) != n ||
      static_cast<int>(offsets.size()) != n)
    throw std::invalid_argument("rpn_loss: prediction/sample size mismatch");
  if (grad_obj) grad_obj->assign(n, 0.0);
  if (grad_off) grad_off->assign(n, {0, 0, 0, 0});

  double obj_loss = 0.0, reg_loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = 0.0;
    obj_loss += bce_logit(obj_logits[i], match.labels[i], &g);
    if (grad_obj) (*grad_obj)[i] = g / n;
    if (match.labels[i] == 1) {
      std::array<double, 4> gr{};
      reg_loss += match.weights[i] * smooth_l1(offsets[i], match.targets[i], &gr);
      if (grad_off)
        for (int j = 0; j < 4; ++j)
          (*grad_off)[i][j] = lambda * match.weights[i] * gr[j] / n;
    }
  }
  return obj_loss / n + lambda * reg_loss / n;
}

double rcnn_loss(const Tensor& cls_logits,
                 const std::vector<std::array<double, 4>>& offsets,
                 const std::vector<int>& target_cls,
                 const std::vector<std::array<double, 4>>& targets,
                 const std::vector<double>& weights, double lambda,
                 Tensor* grad_cls,
                 std::vector<std::array<double, 4>>* grad_off) {
  const int n = cls_logits.dim(0), k = cls_logits.dim(1);
  if (static_cast<int>(target_cls.size()) != n)
    throw std::invalid_argument("rcnn_loss: label count mismatch");
  if (grad_cls) *grad_cls = Tensor(cls_logits.shape);
  if (grad_off) grad_off->assign(n, {0, 0, 0, 0});

  double cls_loss = 0.0, reg_loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = cls_logits.data.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    cls_loss += weights[i] * (std::log(sum) - (row[target_cls[i]] - mx));
    if (grad_cls) {
      double* g = grad_cls->data.data() + static_cast<int64_t>(i) * k;
      for (int j = 0; j < k; ++j)
        g[j] = weights[i] * std::exp(row[j] - mx) / sum / n;
      g[target_cls[i]] -= weights[i] / n;
    }
    if (target_cls[i] > 0) {
      std::array<double, 4> gr{};
      reg_loss += weights[i] * smooth_l1(offsets[i], targets[i], &gr);
      if (grad_off)
        for (int j = 0; j < 4; ++j)
          (*grad_off)[i][j] = lambda * weights[i] * gr[j] / n;
    }
  }
  return cls_loss / n + lambda * reg_loss / n;
}

DetectionModule::DetectionModule(int classes, int feat_channels, int stride,
                                 int hidden, Rng& rng,
                                 const DetectionConfig& cfg)
    : num_classes(classes), feat_stride(stride), config(cfg) {
  const int k = static_cast<int>(cfg.anchors.scales.size() *
                                 cfg.anchors.ratios.size());
  head.add(make_conv(feat_channels, feat_channels, 3, 1, 2, 2, rng,
                     Init::HeNormal));
  head.add(std::make_unique<Relu>());
  head.add(make_conv(feat_channels, feat_channels, 3, 1, 2, 2, rng,
                     Init::HeNormal));
  head.add(std::make_unique<Relu>());

  rpn_trunk.add(make_conv(feat_channels, feat_channels, 3, 1, 1, 1, rng,
                          Init::HeNormal));
  rpn_trunk.add(std::make_unique<Relu>());
  rpn_obj.add(make_conv(feat_channels, k, 1, 1, 0, 1, rng, Init::Gaussian01));
  rpn_reg.add(make_conv(feat_channels, 4 * k, 1, 1, 0, 1, rng, Init::Gaussian01));

  const int roi_feat = feat_channels * 7 * 7;
  rcnn_trunk.add(std::make_unique<RoiPool>(7, stride));
  rcnn_trunk.add(make_fc(roi_feat, hidden, rng, Init::HeNormal));
  rcnn_trunk.add(std::make_unique<Relu>());
  rcnn_trunk.add(make_fc(hidden, hidden, rng, Init::HeNormal));
  rcnn_trunk.add(std::make_unique<Relu>());
  rcnn_cls.add(make_fc(hidden, classes + 1, rng, Init::Gaussian01));
  rcnn_reg.add(make_fc(hidden, 4, rng, Init::Gaussian01));
}

std::vector<Box> DetectionModule::rpn_proposals(const Tensor& head_feat,
                                                int img_w, int img_h,
                                                int top_n) {
  const Tensor trunk = rpn_trunk.forward(head_feat);
  const Tensor obj = rpn_obj.forward(trunk);
  const Tensor reg = rpn_reg.forward(trunk);
  const int k = obj.dim(0), fh = obj.dim(1), fw = obj.dim(2);
  const std::vector<Box> anchors = make_anchors(fh, fw, config.anchors);

  std::vector<int> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  auto logit_of = [&](int idx) {
    const int a = idx % k, cell = idx / k;
    return obj.data[(a * fh + cell / fw) * fw + cell % fw];
  };
  const int keep = std::min<int>(top_n, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int x, int y) { return logit_of(x) > logit_of(y); });

  std::vector<Box> out;
  for (int oi = 0; oi < keep; ++oi) {
    const int idx = order[oi];
    const int a = idx % k, cell = idx / k, x = cell % fw, y = cell / fw;
    std::array<double, 4> t;
    for (int j = 0; j < 4; ++j)
      t[j] = reg.data[((a * 4 + j) * fh + y) * fw + x];
    const Box anchor = anchors[idx].clipped(img_w, img_h);
    if (anchor.w() <= 0 || anchor.h() <= 0) continue;
    Box b = decode_box(anchor, t).clipped(img_w, img_h);
    if (b.w() < 2 || b.h() < 2) continue;
    out.push_back(b);
  }
  return out;
}

DetectionModule::StepResult DetectionModule::train_step(
    const Tensor& backbone_feat, const PseudoLabelSet& pseudo, int img_w,
    int img_h, Rng& rng) {
  StepResult res;
  if (pseudo.empty()) {
    res.skipped = true;
    return res;
  }
  const Tensor hf = head.forward(backbone_feat);

  // ---- RPN
  const Tensor trunk = rpn_trunk.forward(hf);
  const Tensor obj = rpn_obj.forward(trunk);
  const Tensor reg = rpn_reg.forward(trunk);
  const int k = obj.dim(0), fh = obj.dim(1), fw = obj.dim(2);
  const std::vector<Box> anchors = make_anchors(fh, fw, config.anchors);

  const AnchorMatch match =
      match_anchors(anchors, pseudo, img_w, img_h, rng, config.rpn_pos,
                    config.rpn_neg);
  std::vector<double> obj_logits;
  std::vector<std::array<double, 4>> offsets;
  for (int idx : match.sampled) {
    const int a = idx % k, cell = idx / k, x = cell % fw, y = cell / fw;
    obj_logits.push_back(obj.data[(a * fh + y) * fw + x]);
    std::array<double, 4> t;
    for (int j = 0; j < 4; ++j)
      t[j] = reg.data[((a * 4 + j) * fh + y) * fw + x];
    offsets.push_back(t);
  }
  std::vector<double> g_obj;
  std::vector<std::array<double, 4>> g_off;
  res.rpn = rpn_loss(obj_logits, offsets, match, config.lambda, &g_obj, &g_off);

  Tensor g_obj_map(obj.shape), g_reg_map(reg.shape);
  for (size_t s = 0; s < match.sampled.size(); ++s) {
    const int idx = match.sampled[s];
    const int a = idx % k, cell = idx / k, x = cell % fw, y = cell / fw;
    g_obj_map.data[(a * fh + y) * fw + x] += g_obj[s];
    for (int j = 0; j < 4; ++j)
      g_reg_map.data[((a * 4 + j) * fh + y) * fw + x] += g_off[s][j];
  }
  Tensor g_trunk = rpn_obj.backward(g_obj_map);
  const Tensor g_trunk2 = rpn_reg.backward(g_reg_map);
  for (size_t i = 0; i < g_trunk.data.size(); ++i)
    g_trunk.data[i] += g_trunk2.data[i];
  Tensor g_hf = rpn_trunk.backward(g_trunk);

  // ---- RCNN (proposal pass re-runs the RPN nets forward-only)
  std::vector<Box> cands = rpn_proposals(hf, img_w, img_h, config.top_n);
  for (const auto& inst : pseudo) {
    cands.push_back(inst.box);
    for (int j = 0; j < 3; ++j) {  // jittered copies keep fg samples early
      Box b = inst.box;
      const double jw = inst.box.w() * 0.1, jh = inst.box.h() * 0.1;
      b.x1 += rng.uniform(-jw, jw);
      b.y1 += rng.uniform(-jh, jh);
      b.x2 += rng.uniform(-jw, jw);
      b.y2 += rng.uniform(-jh, jh);
      b = b.clipped(img_w, img_h);
      if (b.w() >= 2 && b.h() >= 2) cands.push_back(b);
    }
  }

  struct RoiSample {
    Box box;
    int cls;
    double weight;
    std::array<double, 4> target;
  };
  std::vector<RoiSample> fg_pool, bg_pool;
  for (const Box& b : cands) {
    double best = 0.0;
    int bestg = -1;
    for (size_t g = 0; g < pseudo.size(); ++g) {
      const double v = iou(b, pseudo[g].box);
      if (v > best) {
        best = v;
        bestg = static_cast<int>(g);
      }
    }
    if (best >= config.fg_iou && bestg >= 0) {
      fg_pool.push_back({b, pseudo[bestg].cls, pseudo[bestg].weight,
                         encode_box(b, pseudo[bestg].box)});
    } else if (best >= config.bg_iou_lo && best < config.fg_iou) {
      bg_pool.push_back({b, 0, 1.0, {0, 0, 0, 0}});
    }
  }
  std::vector<RoiSample> rois;
  sample_pool(fg_pool, config.rcnn_fg, rng, &rois);
  const int got_fg = static_cast<int>(rois.size());
  sample_pool(bg_pool, config.rcnn_bg + (config.rcnn_fg - got_fg), rng, &rois);
  if (rois.empty()) {
    res.backbone_grad = head.backward(g_hf);
    return res;
  }

  std::vector<Box> roi_boxes;
  std::vector<int> target_cls;
  std::vector<std::array<double, 4>> targets;
  std::vector<double> weights;
  for (const auto& s : rois) {
    roi_boxes.push_back(s.box);
    target_cls.push_back(s.cls);
    targets.push_back(s.target);
    weights.push_back(s.weight);
  }

  const Tensor feats = rcnn_trunk.forward(hf, &roi_boxes);
  const Tensor cls_logits = rcnn_cls.forward(feats);
  const Tensor reg_out = rcnn_reg.forward(feats);
  std::vector<std::array<double, 4>> pred_off(roi_boxes.size());
  for (size_t i = 0; i < roi_boxes.size(); ++i)
    for (int j = 0; j < 4; ++j) pred_off[i][j] = reg_out.data[i * 4 + j];

  Tensor g_cls;
  std::vector<std::array<double, 4>> g_reg;
  res.rcnn = rcnn_loss(cls_logits, pred_off, target_cls, targets, weights,
                       config.lambda, &g_cls, &g_reg);
  Tensor g_reg_t(reg_out.shape);
  for (size_t i = 0; i < g_reg.size(); ++i)
    for (int j = 0; j < 4; ++j) g_reg_t.data[i * 4 + j] = g_reg[i][j];

  Tensor g_feats = rcnn_cls.backward(g_cls);
  const Tensor g_feats2 = rcnn_reg.backward(g_reg_t);
  for (size_t i = 0; i < g_feats.data.size(); ++i)
    g_feats.data[i] += g_feats2.data[i];
  const Tensor g_hf2 = rcnn_trunk.backward(g_feats);
  for (size_t i = 0; i < g_hf.data.size(); ++i) g_hf.data[i] += g_hf2.data[i];

  res.backbone_grad = head.backward(g_hf);
  return res;
}

std::vector<Detection> DetectionModule::infer(const Tensor& backbone_feat,
                                              int img_w, int img_h) {
  const Tensor hf = head.forward(backbone_feat);
  const std::vector<Box> rois = rpn_proposals(hf, img_w, img_h, config.top_n);
  if (rois.empty()) return {};

  const Tensor feats = rcnn_trunk.forward(hf, &rois);
  const Tensor cls_logits = rcnn_cls.forward(feats);
  const Tensor reg_out = rcnn_reg.forward(feats);
  const int n = static_cast<int>(rois.size()), k = num_classes + 1;

  // softmax probabilities and refined boxes
  std::vector<std::vector<double>> probs(n, std::vector<double>(k));
  std::vector<Box> refined(n);
  for (int i = 0; i < n; ++i) {
    const double* row = cls_logits.data.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) probs[i][j] = std::exp(row[j] - mx) / sum;
    std::array<double, 4> t;
    for (int j = 0; j < 4; ++j) t[j] = reg_out.data[i * 4 + j];
    refined[i] = decode_box(rois[i], t).clipped(img_w, img_h);
  }

  std::vector<Detection> dets;
  for (int c = 1; c <= num_classes; ++c) {
    std::vector<Box> cboxes;
    std::vector<double> cscores;
    std::vector<int> src;
    for (int i = 0; i < n; ++i) {
      if (refined[i].w() < 1 || refined[i].h() < 1) continue;
      cboxes.push_back(refined[i]);
      cscores.push_back(probs[i][c]);
      src.push_back(i);
    }
    if (cboxes.empty()) continue;
    const NmsResult r = nms(cboxes, cscores, config.nms_threshold);
    for (int kept : r.kept)
      if (cscores[kept] >= config.score_threshold)
        dets.push_back({c, cboxes[kept], cscores[kept]});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return dets;
}

PseudoLabelSet DetectionModule::dense_calibration(const Tensor& backbone_feat,
                                                  const Tensor& image,
                                                  const CalibrationConfig& calib) {
  const int img_h = image.dim(1), img_w = image.dim(2);
  const Tensor hf = head.forward(backbone_feat);
  const std::vector<Box> rois = rpn_proposals(hf, img_w, img_h, config.top_n);
  if (rois.empty()) return {};

  const Tensor feats = rcnn_trunk.forward(hf, &rois);
  const Tensor cls_logits = rcnn_cls.forward(feats);
  const Tensor reg_out = rcnn_reg.forward(feats);
  const int n = static_cast<int>(rois.size()), k = num_classes + 1;

  std::vector<std::vector<double>> probs(n, std::vector<double>(k));
  std::vector<Box> refined(n);
  std::vector<int> argmax_cls(n);
  std::vector<double> argmax_score(n);
  Tensor start({n, k});
  for (int i = 0; i < n; ++i) {
    const double* row = cls_logits.data.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) probs[i][j] = std::exp(row[j] - mx) / sum;
    int arg = 1;
    for (int j = 2; j < k; ++j)
      if (probs[i][j] > probs[i][arg]) arg = j;
    argmax_cls[i] = arg;
    argmax_score[i] = probs[i][arg];
    start.data[static_cast<int64_t>(i) * k + arg] = probs[i][arg];
    std::array<double, 4> t;
    for (int j = 0; j < 4; ++j) t[j] = reg_out.data[i * 4 + j];
    refined[i] = decode_box(rois[i], t).clipped(img_w, img_h);
  }

  // excitation through the RCNN head for every roi at once
  std::vector<Layer*> path;
  for (const auto& l : rcnn_trunk.layers()) path.push_back(l.get());
  for (const auto& l : rcnn_cls.layers()) path.push_back(l.get());
  const Tensor rel = excitation_bp(path, start);  // (n, C, 7, 7)
  const int ch = rel.dim(1), g = rel.dim(2);
  auto attention_of = [&](int i) {
    Tensor roi_rel({ch, g, g});
    std::copy_n(rel.data.begin() + static_cast<int64_t>(i) * ch * g * g,
                static_cast<int64_t>(ch) * g * g, roi_rel.data.begin());
    return splat_roi_relevance(roi_rel, rois[i], img_h, img_w);
  };

  PseudoLabelSet out;
  constexpr int kMaxPerClass = 3;
  for (int c = 1; c <= num_classes; ++c) {
    std::vector<Box> cboxes;
    std::vector<double> cscores;
    std::vector<int> src;
    for (int i = 0; i < n; ++i) {
      if (refined[i].w() < 1 || refined[i].h() < 1) continue;
      cboxes.push_back(refined[i]);
      cscores.push_back(probs[i][c]);
      src.push_back(i);
    }
    if (cboxes.empty()) continue;
    const NmsResult r = nms(cboxes, cscores, config.nms_threshold);
    const Tensor heat =
        object_heatmap(refined, argmax_score, argmax_cls, c, img_h, img_w);
    int emitted = 0;
    for (size_t ki = 0; ki < r.kept.size() && emitted < kMaxPerClass; ++ki) {
      const int kept = r.kept[ki];
      if (cscores[kept] < 2 * config.score_threshold) continue;
      std::vector<Tensor> maps = {attention_of(src[kept])};
      std::vector<Box> group_boxes = {cboxes[kept]};
      for (int sidx : r.suppressed[ki]) {
        maps.push_back(attention_of(src[sidx]));
        group_boxes.push_back(cboxes[sidx]);
      }
      std::vector<const Tensor*> mptrs;
      for (const Tensor& m : maps) mptrs.push_back(&m);
      const Tensor attention = build_instance_attention(mptrs);
      out.push_back(fuse_and_segment(attention, heat, image, calib.crf, c,
                                     cscores[kept], cboxes[kept], group_boxes));
      ++emitted;
    }
  }
  return out;
}

std::vector<Param*> DetectionModule::params() {
  std::vector<Param*> ps;
  for (Network* net : {&head, &rpn_trunk, &rpn_obj, &rpn_reg, &rcnn_trunk,
                       &rcnn_cls, &rcnn_reg})
    for (Param* p : net->params()) ps.push_back(p);
  return ps;
}

void DetectionModule::register_params(ParamRegistry& reg,
                                      const std::string& prefix) {
  reg.add_network(prefix + ".head", head);
  reg.add_network(prefix + ".rpn_trunk", rpn_trunk);
  reg.add_network(prefix + ".rpn_obj", rpn_obj);
  reg.add_network(prefix + ".rpn_reg", rpn_reg);
  reg.add_network(prefix + ".rcnn_trunk", rcnn_trunk);
  reg.add_network(prefix + ".rcnn_cls", rcnn_cls);
  reg.add_network(prefix + ".rcnn_reg", rcnn_reg);
}

}  // namespace weakseg
