#include "weakseg/instance_seg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace weakseg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// bilinear lookup with edge clamping
double sample_bilinear(const Tensor& map, double y, double x) {
  const int h = map.dim(0), w = map.dim(1);
  const double yc = std::clamp(y, 0.0, h - 1.0);
  const double xc = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(std::floor(yc));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = yc - y0, fx = xc - x0;
  return map.data[y0 * w + x0] * (1 - fy) * (1 - fx) +
         map.data[y0 * w + x1] * (1 - fy) * fx +
         map.data[y1 * w + x0] * fy * (1 - fx) +
         map.data[y1 * w + x1] * fy * fx;
}

}  // namespace

double mask_loss(const std::vector<Tensor>& pred_logits,
                 const std::vector<Tensor>& targets,
                 const std::vector<int>& cls,
                 const std::vector<double>& weights,
                 std::vector<Tensor>* grads) {
  const size_t n = pred_logits.size();
  if (targets.size() != n || cls.size() != n || weights.size() != n)
    throw std::invalid_argument("mask_loss: size mismatch");
  if (grads) {
    grads->clear();
    for (const Tensor& p : pred_logits) grads->emplace_back(p.shape);
  }

  double total = 0.0;
  int included = 0;
  for (size_t i = 0; i < n; ++i)
    if (cls[i] > 0) ++included;
  if (included == 0) return 0.0;

  for (size_t i = 0; i < n; ++i) {
    if (cls[i] <= 0) continue;
    const int g = pred_logits[i].dim(1);
    const int64_t npix = static_cast<int64_t>(g) * g;
    const double* logit =
        pred_logits[i].data.data() + static_cast<int64_t>(cls[i] - 1) * npix;
    double roi_loss = 0.0;
    for (int64_t p = 0; p < npix; ++p) {
      const double x = logit[p], t = targets[i].data[p];
      roi_loss +=
          std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
      if (grads) {
        double* gp = (*grads)[i].data.data() +
                     static_cast<int64_t>(cls[i] - 1) * npix + p;
        *gp = weights[i] * (sigmoid(x) - t) / (npix * included);
      }
    }
    total += weights[i] * roi_loss / npix;
  }
  return total / included;
}

Tensor crop_resize_mask(const Tensor& mask, const Box& box, int g) {
  Tensor out({g, g});
  const double bw = box.w(), bh = box.h();
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const double y = box.y1 + (gy + 0.5) / g * bh - 0.5;
      const double x = box.x1 + (gx + 0.5) / g * bw - 0.5;
      out.data[gy * g + gx] = sample_bilinear(mask, y, x);
    }
  return out;
}

Tensor paste_mask(const Tensor& grid, const Box& box, int height, int width) {
  Tensor out({height, width});
  const int g = grid.dim(0);
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int x1 = std::min(width, static_cast<int>(std::ceil(box.x2)));
  const int y1 = std::min(height, static_cast<int>(std::ceil(box.y2)));
  const double bw = box.w(), bh = box.h();
  if (bw <= 0 || bh <= 0) return out;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double gy = (y + 0.5 - box.y1) / bh * g - 0.5;
      const double gx = (x + 0.5 - box.x1) / bw * g - 0.5;
      out.data[y * width + x] = sample_bilinear(grid, gy, gx);
    }
  return out;
}

InstanceModule::InstanceModule(int classes, int feat_channels, int stride,
                               int hidden, Rng& rng,
                               const DetectionConfig& cfg)
    : det(classes, feat_channels, stride, hidden, rng, cfg),
      mask_pool(14, stride),
      num_classes(classes) {
  const int branch_ch = 16;
  for (int d : {1, 2, 4, 6}) {
    Network b;
    b.add(make_conv(feat_channels, branch_ch, 3, 1, d, d, rng, Init::HeNormal));
    b.add(std::make_unique<Relu>());
    branches.push_back(std::move(b));
  }
  mask_out.add(make_conv(4 * 16, classes, 1, 1, 0, 1, rng, Init::Gaussian01));
}

Tensor InstanceModule::mask_forward(const Tensor& roi_feat) {
  const int g = roi_feat.dim(1);
  const int bc = 16;
  Tensor concat({static_cast<int>(branches.size()) * bc, g, g});
  for (size_t b = 0; b < branches.size(); ++b) {
    const Tensor out = branches[b].forward(roi_feat);
    std::copy(out.data.begin(), out.data.end(),
              concat.data.begin() + static_cast<int64_t>(b) * bc * g * g);
  }
  return mask_out.forward(concat);
}

Tensor InstanceModule::mask_backward(const Tensor& grad_logits) {
  const Tensor g_concat = mask_out.backward(grad_logits);
  const int bc = 16;
  const int g = g_concat.dim(1);
  Tensor g_feat;
  for (size_t b = 0; b < branches.size(); ++b) {
    Tensor slice({bc, g, g});
    std::copy_n(g_concat.data.begin() + static_cast<int64_t>(b) * bc * g * g,
                static_cast<int64_t>(bc) * g * g, slice.data.begin());
    Tensor gb = branches[b].backward(slice);
    if (g_feat.numel() == 0)
      g_feat = std::move(gb);
    else
      for (size_t i = 0; i < g_feat.data.size(); ++i)
        g_feat.data[i] += gb.data[i];
  }
  return g_feat;
}

InstanceModule::StepResult InstanceModule::train_step(
    const Tensor& backbone_feat, const PseudoLabelSet& pseudo, int img_w,
    int img_h, Rng& rng) {
  StepResult res;
  DetectionModule::StepResult d =
      det.train_step(backbone_feat, pseudo, img_w, img_h, rng);
  res.rpn = d.rpn;
  res.rcnn = d.rcnn;
  res.skipped = d.skipped;
  if (d.skipped) return res;
  res.backbone_grad = std::move(d.backbone_grad);

  // mask pass: separate head forward so its activation cache is fresh
  const Tensor hf = det.head.forward(backbone_feat);

  std::vector<Box> rois;
  std::vector<int> roi_cls;
  std::vector<double> roi_w;
  std::vector<int> roi_src;
  for (size_t g = 0; g < pseudo.size(); ++g) {
    // box-only pseudo labels (no mask) train the detection path only
    if (pseudo[g].mask.numel() !=
        static_cast<int64_t>(img_h) * img_w)
      continue;
    const Box base = pseudo[g].box;
    for (int j = 0; j < 2; ++j) {  // the pseudo box plus one jittered copy
      Box b = base;
      if (j > 0) {
        const double jw = base.w() * 0.1, jh = base.h() * 0.1;
        b.x1 += rng.uniform(-jw, jw);
        b.y1 += rng.uniform(-jh, jh);
        b.x2 += rng.uniform(-jw, jw);
        b.y2 += rng.uniform(-jh, jh);
        b = b.clipped(img_w, img_h);
      }
      if (b.w() < 2 || b.h() < 2) continue;
      rois.push_back(b);
      roi_cls.push_back(pseudo[g].cls);
      roi_w.push_back(pseudo[g].weight);
      roi_src.push_back(static_cast<int>(g));
    }
  }
  if (rois.empty()) return res;

  const Tensor pooled = mask_pool.forward_rois(hf, rois);  // (R, C, 14, 14)
  const int ch = pooled.dim(1), g14 = pooled.dim(2);
  const int64_t roi_sz = static_cast<int64_t>(ch) * g14 * g14;

  // per-roi sequential forward/backward (branch nets cache one roi at a time)
  Tensor g_pooled(pooled.shape);
  double total = 0.0;
  int included = 0;
  std::vector<Tensor> logits_list, target_list;
  std::vector<int> cls_list;
  std::vector<double> w_list;
  for (size_t i = 0; i < rois.size(); ++i) {
    Tensor roi_feat({ch, g14, g14});
    std::copy_n(pooled.data.begin() + static_cast<int64_t>(i) * roi_sz, roi_sz,
                roi_feat.data.begin());
    const Tensor logits = mask_forward(roi_feat);
    Tensor target = crop_resize_mask(pseudo[roi_src[i]].mask, rois[i], 14);
    for (double& v : target.data) v = v >= 0.5 ? 1.0 : 0.0;

    std::vector<Tensor> grads;
    const double l = mask_loss({logits}, {target}, {roi_cls[i]}, {roi_w[i]},
                               &grads);
    total += l;
    ++included;
    // rescale: mask_loss normalizes by its own roi count (1 here)
    for (double& v : grads[0].data) v /= static_cast<double>(rois.size());
    const Tensor g_feat = mask_backward(grads[0]);
    std::copy(g_feat.data.begin(), g_feat.data.end(),
              g_pooled.data.begin() + static_cast<int64_t>(i) * roi_sz);
  }
  res.mask = included ? total / included : 0.0;

  const Tensor g_hf = mask_pool.backward(g_pooled);
  const Tensor g_backbone = det.head.backward(g_hf);
  if (res.backbone_grad.numel() == 0)
    res.backbone_grad = g_backbone;
  else
    for (size_t i = 0; i < res.backbone_grad.data.size(); ++i)
      res.backbone_grad.data[i] += g_backbone.data[i];
  return res;
}

PseudoLabelSet InstanceModule::instance_infer(const Tensor& backbone_feat,
                                              const Tensor& image) {
  const int img_h = image.dim(1), img_w = image.dim(2);
  std::vector<Detection> dets = det.infer(backbone_feat, img_w, img_h);
  if (dets.empty()) return {};
  // dets arrive score-sorted; cap the hypothesis count (mask evaluation and
  // downstream CRF cost scale linearly with it)
  constexpr size_t kMaxHypotheses = 6;
  if (dets.size() > kMaxHypotheses) dets.resize(kMaxHypotheses);

  const Tensor hf = det.head.forward(backbone_feat);
  PseudoLabelSet out;
  for (const Detection& dt : dets) {
    if (dt.box.w() < 2 || dt.box.h() < 2) continue;
    const std::vector<Box> one = {dt.box};
    const Tensor pooled = mask_pool.forward_rois(hf, one);
    const int ch = pooled.dim(1), g14 = pooled.dim(2);
    Tensor roi_feat({ch, g14, g14});
    std::copy(pooled.data.begin(), pooled.data.end(), roi_feat.data.begin());
    const Tensor logits = mask_forward(roi_feat);
    const int64_t npix = static_cast<int64_t>(g14) * g14;
    Tensor grid({g14, g14});
    const double* lp =
        logits.data.data() + static_cast<int64_t>(dt.cls - 1) * npix;
    for (int64_t p = 0; p < npix; ++p) grid.data[p] = sigmoid(lp[p]);

    InstanceHypothesis h;
    h.cls = dt.cls;
    h.box = dt.box;
    h.mask = paste_mask(grid, dt.box, img_h, img_w);
    h.weight = sigmoid(dt.score);
    h.low_confidence = false;
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<Param*> InstanceModule::params() {
  std::vector<Param*> ps = det.params();
  for (Network& b : branches)
    for (Param* p : b.params()) ps.push_back(p);
  for (Param* p : mask_out.params()) ps.push_back(p);
  return ps;
}

void InstanceModule::register_params(ParamRegistry& reg,
                                     const std::string& prefix) {
  det.register_params(reg, prefix + ".det");
  for (size_t b = 0; b < branches.size(); ++b)
    reg.add_network(prefix + ".mask_b" + std::to_string(b), branches[b]);
  reg.add_network(prefix + ".mask_out", mask_out);
}

PseudoLabelSet refine_with_crf(const PseudoLabelSet& hypotheses,
                               const Tensor& image, const CrfParams& crf,
                               double nms_threshold) {
  const int n = static_cast<int>(hypotheses.size());
  if (n == 0) return {};
  const int img_h = image.dim(1), img_w = image.dim(2);

  // union-find over same-class overlapping boxes
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (hypotheses[i].cls == hypotheses[j].cls &&
          iou(hypotheses[i].box, hypotheses[j].box) > nms_threshold)
        parent[find(i)] = find(j);

  std::vector<std::vector<int>> groups;
  {
    std::vector<int> root_to_group(n, -1);
    for (int i = 0; i < n; ++i) {
      const int r = find(i);
      if (root_to_group[r] < 0) {
        root_to_group[r] = static_cast<int>(groups.size());
        groups.emplace_back();
      }
      groups[root_to_group[r]].push_back(i);
    }
  }

  PseudoLabelSet out;
  for (const std::vector<int>& grp : groups) {
    Tensor confident({img_h, img_w});
    for (int i : grp)
      for (size_t p = 0; p < confident.data.size(); ++p)
        confident.data[p] += hypotheses[i].mask.data[p];
    double mx = 0.0;
    for (double v : confident.data) mx = std::max(mx, v);
    if (mx > 0)
      for (double& v : confident.data) v /= mx;

    const Tensor unary = unary_from_confident_map(confident);
    const Tensor q = mean_field(unary, image, crf);  // (2, H, W)
    const double* fg = q.data.data() + static_cast<int64_t>(img_h) * img_w;

    for (int i : grp) {
      InstanceHypothesis h = hypotheses[i];
      Box support = h.box;
      support.x1 -= 2;
      support.y1 -= 2;
      support.x2 += 2;
      support.y2 += 2;
      support = support.clipped(img_w, img_h);
      Tensor mask({img_h, img_w});
      int x_lo = img_w, x_hi = -1, y_lo = img_h, y_hi = -1;
      for (int y = 0; y < img_h; ++y)
        for (int x = 0; x < img_w; ++x) {
          if (y < support.y1 || y + 1 > support.y2 || x < support.x1 ||
              x + 1 > support.x2)
            continue;
          const double v = fg[y * img_w + x];
          mask.data[y * img_w + x] = v;
          if (v >= 0.5) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
          }
        }
      if (x_hi >= x_lo && y_hi >= y_lo)
        h.box = Box{static_cast<double>(x_lo), static_cast<double>(y_lo),
                    x_hi + 1.0, y_hi + 1.0};
      if (x_hi >= x_lo) {
        h.mask = std::move(mask);
        h.low_confidence = false;
      } else {
        h.low_confidence = true;  // CRF wiped the instance; keep the original
      }
      out.push_back(std::move(h));
    }
  }
  return out;
}

}  // namespace weakseg
