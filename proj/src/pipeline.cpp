#include "weakseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "weakseg/calibration.hpp"
#include "weakseg/proposals.hpp"

namespace weakseg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void zero_params(const std::vector<Param*>& params) {
  for (Param* p : params) {
    p->value.ensure_grad();
    std::fill(p->value.grad.begin(), p->value.grad.end(), 0.0);
  }
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

void check_finite(double loss, Stage stage, int iter) {
  if (!std::isfinite(loss))
    throw std::runtime_error("training diverged at stage " +
                             stage_name(stage) + " iteration " +
                             std::to_string(iter));
}

// precomputed per-image training inputs (frozen-backbone cascade)
struct ImageCache {
  std::vector<Box> proposals;
  Tensor feat;
};

PseudoLabelSet detections_to_pseudo(const std::vector<Detection>& dets) {
  PseudoLabelSet out;
  constexpr size_t kMaxPseudo = 6;  // dets are score-sorted
  for (const Detection& d : dets) {
    if (out.size() >= kMaxPseudo) break;
    InstanceHypothesis h;
    h.cls = d.cls;
    h.box = d.box;
    h.weight = sigmoid(d.score);
    h.low_confidence = false;
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Cls: return "cls";
    case Stage::Det: return "det";
    case Stage::Refine: return "refine";
    case Stage::Seg: return "seg";
  }
  return "?";
}

namespace {

// The backbone stays frozen through cascade pre-training, so its first
// layer is seeded with a fixed filter bank instead of pure noise: oriented
// edges (two polarities each), color passthroughs, and a center-surround
// cell. Orientation statistics are what tell the shape classes apart, and
// random first-layer filters wash them out.
void seed_first_conv(Conv2d& conv) {
  auto& w = conv.weight().value.data;  // (out_ch, in_ch*3*3)
  std::fill(w.begin(), w.begin() + 13 * 27, 0.0);  // channels 13..15 stay random
  const int in_stride = 9;  // per input channel
  auto at = [&](int oc, int ic, int ky, int kx) -> double& {
    return w[(static_cast<size_t>(oc) * 3 + ic) * in_stride + ky * 3 + kx];
  };
  // 8 luminance edge filters: 4 orientations x 2 polarities (relu keeps
  // only positive responses, so both signs are needed)
  const double sobel[4][9] = {
      {-1, -2, -1, 0, 0, 0, 1, 2, 1},   // horizontal edge
      {-1, 0, 1, -2, 0, 2, -1, 0, 1},   // vertical edge
      {-2, -1, 0, -1, 0, 1, 0, 1, 2},   // diagonal /
      {0, -1, -2, 1, 0, -1, 2, 1, 0},   // diagonal backslash
  };
  int oc = 0;
  for (int o = 0; o < 4; ++o)
    for (int sign = 0; sign < 2; ++sign, ++oc)
      for (int ic = 0; ic < 3; ++ic)
        for (int k = 0; k < 9; ++k)
          at(oc, ic, k / 3, k % 3) =
              (sign ? -1.0 : 1.0) * sobel[o][k] / (3.0 * 4.0);
  // 3 color passthroughs
  for (int ic = 0; ic < 3; ++ic, ++oc) at(oc, ic, 1, 1) = 1.0;
  // 2 center-surround cells (on / off)
  for (int sign = 0; sign < 2; ++sign, ++oc)
    for (int ic = 0; ic < 3; ++ic)
      for (int k = 0; k < 9; ++k)
        at(oc, ic, k / 3, k % 3) =
            (sign ? -1.0 : 1.0) * (k == 4 ? 8.0 : -1.0) / (3.0 * 8.0);
  // remaining channels (oc..15) keep zero weights; the following random
  // layers mix the structured responses instead
}

}  // namespace

Network make_backbone(int out_channels, Rng& rng) {
  Network net;
  Layer* first = net.add(make_conv(3, 16, 3, 1, 1, 1, rng, Init::HeNormal));
  seed_first_conv(*static_cast<Conv2d*>(first));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(make_conv(16, 32, 3, 1, 1, 1, rng, Init::HeNormal));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(make_conv(32, out_channels, 3, 1, 1, 1, rng, Init::HeNormal));
  net.add(std::make_unique<Relu>());
  return net;
}

Trainer::Trainer(const Config& config) : cfg(config) {
  Rng rng_backbone(cfg.seed, 1), rng_mil(cfg.seed, 2), rng_det(cfg.seed, 3),
      rng_refine(cfg.seed, 4), rng_seg(cfg.seed, 5);
  backbone = make_backbone(cfg.backbone_channels, rng_backbone);
  mil = MilModule(cfg.num_classes, cfg.backbone_channels, 7, cfg.feat_stride,
                  cfg.hidden, rng_mil);
  det = DetectionModule(cfg.num_classes, cfg.backbone_channels,
                        cfg.feat_stride, cfg.hidden, rng_det, cfg.detection);
  refine = InstanceModule(cfg.num_classes, cfg.backbone_channels,
                          cfg.feat_stride, cfg.hidden, rng_refine,
                          cfg.detection);
  seg = InstanceModule(cfg.num_classes, cfg.backbone_channels, cfg.feat_stride,
                       cfg.hidden, rng_seg, cfg.detection);
}

ParamRegistry Trainer::registry() {
  ParamRegistry reg;
  reg.add_network("backbone", backbone);
  mil.register_params(reg, "mil");
  det.register_params(reg, "det");
  refine.register_params(reg, "refine");
  seg.register_params(reg, "seg");
  return reg;
}

std::vector<Param*> Trainer::backbone_params() { return backbone.params(); }

std::vector<Param*> Trainer::stage_params(Stage s) {
  switch (s) {
    case Stage::Cls: return mil.params();
    case Stage::Det: return det.params();
    case Stage::Refine: return refine.params();
    case Stage::Seg: return seg.params();
  }
  return {};
}

std::vector<Param*> Trainer::all_params() {
  std::vector<Param*> ps = backbone.params();
  for (Stage s : {Stage::Cls, Stage::Det, Stage::Refine, Stage::Seg})
    for (Param* p : stage_params(s)) ps.push_back(p);
  return ps;
}

void Trainer::save(const std::string& path) {
  ParamRegistry reg = registry();
  save_checkpoint(path, reg);
}

void Trainer::load(const std::string& path) {
  ParamRegistry reg = registry();
  load_checkpoint(path, reg);
}

std::vector<int> backward_validation_step(const std::vector<Detection>& dets,
                                          const std::vector<Box>& proposals,
                                          double beta, double bg_max_iou) {
  std::vector<int> labels(proposals.size(), -1);
  for (size_t i = 0; i < proposals.size(); ++i) {
    double best = 0.0;
    int best_cls = 0;
    for (const Detection& d : dets) {
      const double v = iou(proposals[i], d.box);
      if (v > best) {
        best = v;
        best_cls = d.cls;
      }
    }
    if (best > beta)
      labels[i] = best_cls;
    else if (best < bg_max_iou)
      labels[i] = 0;
  }
  return labels;
}

namespace {

// subsample of a proposal list for one MIL training step
std::vector<int> pick_rois(int total, int want, Rng& rng) {
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  const int n = std::min(want, total);
  for (int i = 0; i < n; ++i)
    std::swap(idx[i], idx[i + rng.uniform_int(0, total - 1 - i)]);
  idx.resize(n);
  return idx;
}

// one MIL optimization step on one image; returns the loss and (optionally)
// the backbone feature gradient. pc_labels: per-proposal target columns for
// the proposal classification loss, empty to skip it.
double mil_step(MilModule& mil, const Tensor& feat,
                const std::vector<Box>& proposals,
                const std::vector<int>& labels, int max_props, Rng& rng,
                Tensor* backbone_grad,
                const std::vector<int>& full_pc_labels = {}) {
  const std::vector<int> sel =
      pick_rois(static_cast<int>(proposals.size()), max_props, rng);
  std::vector<Box> rois;
  std::vector<int> pc_labels;
  for (int i : sel) {
    rois.push_back(proposals[i]);
    if (!full_pc_labels.empty()) pc_labels.push_back(full_pc_labels[i]);
  }
  if (rois.empty()) return 0.0;

  MilModule::Forward f = mil.forward(feat, rois);
  Tensor gxc, gxp;
  double loss = mil_loss(f.x_c, f.x_p, labels, &gxc, &gxp);
  if (!pc_labels.empty()) {
    Tensor gpc;
    loss += proposal_class_loss(f.x_c, pc_labels, &gpc);
    for (size_t i = 0; i < gxc.data.size(); ++i) gxc.data[i] += gpc.data[i];
  }
  Tensor g_feat = mil.backward(gxc, gxp);
  if (backbone_grad) {
    if (backbone_grad->numel() == 0)
      *backbone_grad = std::move(g_feat);
    else
      for (size_t i = 0; i < backbone_grad->data.size(); ++i)
        backbone_grad->data[i] += g_feat.data[i];
  }
  return loss;
}

}  // namespace

std::vector<PseudoLabelStore> run_cascade_pretrain(
    Trainer& trainer, const std::vector<Sample>& train, const LogFn& log,
    const std::function<void(Stage)>& on_stage_done) {
  const Config& cfg = trainer.cfg;
  const int n = static_cast<int>(train.size());
  if (n == 0) throw std::invalid_argument("empty training set");
  Rng rng(cfg.seed, 10);

  // frozen backbone: proposals and features computed once
  std::vector<ImageCache> cache(n);
  for (int i = 0; i < n; ++i) {
    cache[i].proposals = generate_proposals(train[i].image, cfg.proposals);
    cache[i].feat = trainer.backbone.forward(train[i].image);
  }

  const int cls_iters = cfg.cls_iters > 0 ? cfg.cls_iters : cfg.cascade_iters;
  const int det_iters = cfg.det_iters > 0 ? cfg.det_iters : cfg.cascade_iters;
  const int refine_iters =
      cfg.refine_iters > 0 ? cfg.refine_iters : cfg.cascade_iters;
  const int seg_iters = cfg.seg_iters > 0 ? cfg.seg_iters : cfg.cascade_iters;
  auto lr_at = [&](int iter, int total) {
    return iter >= total * 3 / 4 ? cfg.lr_low : cfg.lr;
  };

  std::vector<PseudoLabelStore> stores;

  // ---- stage 1: multi-label classification (Eq. 2)
  // Warm-up phase: |R| = 1 bags of the full-image box until the trunk and
  // classification head discriminate, then full proposal bags so the
  // weight branch learns to concentrate on the evidence.
  const int warm =
      cfg.mil_warm_iters > 0 ? cfg.mil_warm_iters : cls_iters * 2 / 5;
  const std::vector<Box> full_image = {
      {0.0, 0.0, double(cfg.image_size), double(cfg.image_size)}};
  AdamState opt_cls;
  for (int iter = 0; iter < cls_iters; ++iter) {
    const double t0 = now_ms();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = rng.uniform_int(0, n - 1);
      loss += mil_step(trainer.mil, cache[i].feat,
                       iter < warm ? full_image : cache[i].proposals,
                       train[i].labels, cfg.mil_proposals, rng, nullptr);
    }
    loss /= cfg.batch_size;
    check_finite(loss, Stage::Cls, iter);
    opt_cls.step(trainer.stage_params(Stage::Cls), lr_at(iter, cls_iters),
                 cfg.weight_decay);
    zero_params(trainer.stage_params(Stage::Cls));
    if (log) log(iter, "cls", loss, lr_at(iter, cls_iters), now_ms() - t0);
  }

  if (on_stage_done) on_stage_done(Stage::Cls);

  // S1: proposal calibration
  PseudoLabelStore s1;
  s1.producer = "cls";
  for (int i = 0; i < n; ++i) {
    s1.by_image[i] =
        calibrate_image(trainer.mil, cache[i].feat, train[i].image,
                        cache[i].proposals, train[i].labels, cfg.calibration);
    s1.fallback[i] = s1.by_image[i].empty();
  }
  stores.push_back(s1);

  // ---- stage 2: detection (Eq. 3-4)
  AdamState opt_det;
  for (int iter = 0; iter < det_iters; ++iter) {
    const double t0 = now_ms();
    double loss = 0.0;
    int counted = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = rng.uniform_int(0, n - 1);
      const PseudoLabelSet& ps = s1.by_image[i];
      if (ps.empty()) continue;
      auto r = trainer.det.train_step(cache[i].feat, ps, cfg.image_size,
                                      cfg.image_size, rng);
      if (!r.skipped) {
        loss += r.rpn + r.rcnn;
        ++counted;
      }
    }
    if (counted) loss /= counted;
    check_finite(loss, Stage::Det, iter);
    if (counted)
      opt_det.step(trainer.stage_params(Stage::Det), lr_at(iter, det_iters),
                   cfg.weight_decay);
    zero_params(trainer.stage_params(Stage::Det));
    if (log) log(iter, "det", loss, lr_at(iter, det_iters), now_ms() - t0);
  }

  if (on_stage_done) on_stage_done(Stage::Det);

  // S2: dense calibration on the RCNN head, falling back to S1
  PseudoLabelStore s2;
  s2.producer = "det";
  for (int i = 0; i < n; ++i) {
    PseudoLabelSet ps = trainer.det.dense_calibration(
        cache[i].feat, train[i].image, cfg.calibration);
    s2.fallback[i] = ps.empty();
    s2.by_image[i] = ps.empty() ? s1.by_image[i] : std::move(ps);
  }
  stores.push_back(s2);

  // ---- stage 3: instance refinement
  AdamState opt_refine;
  for (int iter = 0; iter < refine_iters; ++iter) {
    const double t0 = now_ms();
    double loss = 0.0;
    int counted = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = rng.uniform_int(0, n - 1);
      const PseudoLabelSet& ps = s2.by_image[i];
      if (ps.empty()) continue;
      auto r = trainer.refine.train_step(cache[i].feat, ps, cfg.image_size,
                                         cfg.image_size, rng);
      if (!r.skipped) {
        loss += r.rpn + r.rcnn + r.mask;
        ++counted;
      }
    }
    if (counted) loss /= counted;
    check_finite(loss, Stage::Refine, iter);
    if (counted)
      opt_refine.step(trainer.stage_params(Stage::Refine),
                      lr_at(iter, refine_iters), cfg.weight_decay);
    zero_params(trainer.stage_params(Stage::Refine));
    if (log)
      log(iter, "refine", loss, lr_at(iter, refine_iters), now_ms() - t0);
  }

  if (on_stage_done) on_stage_done(Stage::Refine);

  // S3: dense instance inference + CRF, falling back to S2
  PseudoLabelStore s3;
  s3.producer = "refine";
  for (int i = 0; i < n; ++i) {
    PseudoLabelSet hyp =
        trainer.refine.instance_infer(cache[i].feat, train[i].image);
    PseudoLabelSet ps = refine_with_crf(hyp, train[i].image,
                                        cfg.calibration.crf,
                                        cfg.detection.nms_threshold);
    s3.fallback[i] = ps.empty();
    s3.by_image[i] = ps.empty() ? s2.by_image[i] : std::move(ps);
  }
  stores.push_back(s3);

  // ---- stage 4: instance segmentation ("fully supervised" on S3)
  AdamState opt_seg;
  for (int iter = 0; iter < seg_iters; ++iter) {
    const double t0 = now_ms();
    double loss = 0.0;
    int counted = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = rng.uniform_int(0, n - 1);
      const PseudoLabelSet& ps = s3.by_image[i];
      if (ps.empty()) continue;
      auto r = trainer.seg.train_step(cache[i].feat, ps, cfg.image_size,
                                      cfg.image_size, rng);
      if (!r.skipped) {
        loss += r.rpn + r.rcnn + r.mask;
        ++counted;
      }
    }
    if (counted) loss /= counted;
    check_finite(loss, Stage::Seg, iter);
    if (counted)
      opt_seg.step(trainer.stage_params(Stage::Seg), lr_at(iter, seg_iters),
                   cfg.weight_decay);
    zero_params(trainer.stage_params(Stage::Seg));
    if (log) log(iter, "seg", loss, lr_at(iter, seg_iters), now_ms() - t0);
  }
  if (on_stage_done) on_stage_done(Stage::Seg);

  return stores;
}

void rebuild_stores(Trainer& trainer, const std::vector<Sample>& train,
                    const std::vector<std::vector<Box>>& proposals,
                    std::vector<PseudoLabelStore>& stores) {
  const Config& cfg = trainer.cfg;
  const int n = static_cast<int>(train.size());
  if (stores.size() != 3) {
    stores.assign(3, PseudoLabelStore{});
    stores[0].producer = "cls";
    stores[1].producer = "det";
    stores[2].producer = "refine";
  }
  PseudoLabelStore& s1 = stores[0];
  PseudoLabelStore& s2 = stores[1];
  PseudoLabelStore& s3 = stores[2];
  for (int i = 0; i < n; ++i) {
    const Tensor feat = trainer.backbone.forward(train[i].image);
    PseudoLabelSet p1 =
        calibrate_image(trainer.mil, feat, train[i].image, proposals[i],
                        train[i].labels, cfg.calibration);
    if (!p1.empty()) {
      s1.by_image[i] = std::move(p1);
      s1.fallback[i] = false;
    } else {
      s1.fallback[i] = true;
    }
    PseudoLabelSet p2 =
        trainer.det.dense_calibration(feat, train[i].image, cfg.calibration);
    if (!p2.empty()) {
      s2.by_image[i] = std::move(p2);
      s2.fallback[i] = false;
    } else {
      s2.fallback[i] = true;
    }
    PseudoLabelSet hyp = trainer.refine.instance_infer(feat, train[i].image);
    PseudoLabelSet p3 = refine_with_crf(
        hyp, train[i].image, cfg.calibration.crf, cfg.detection.nms_threshold);
    if (!p3.empty()) {
      s3.by_image[i] = std::move(p3);
      s3.fallback[i] = false;
    } else {
      s3.fallback[i] = true;
    }
  }
}

void run_forward_backward(Trainer& trainer, const std::vector<Sample>& train,
                          std::vector<PseudoLabelStore>& stores,
                          const LogFn& log) {
  const Config& cfg = trainer.cfg;
  const int n = static_cast<int>(train.size());
  if (n == 0) throw std::invalid_argument("empty training set");
  if (stores.size() != 3)
    throw std::invalid_argument("run_forward_backward: expected 3 stores");
  Rng rng(cfg.seed, 11);

  std::vector<std::vector<Box>> proposals(n);
  for (int i = 0; i < n; ++i)
    proposals[i] = generate_proposals(train[i].image, cfg.proposals);

  PseudoLabelStore& s1 = stores[0];
  PseudoLabelStore& s2 = stores[1];
  PseudoLabelStore& s3 = stores[2];

  const std::vector<Param*> everything = trainer.all_params();
  AdamState opt_fb;
  for (int iter = 0; iter < cfg.fb_iters; ++iter) {
    if (iter > 0 && iter % cfg.refresh_interval == 0)
      rebuild_stores(trainer, train, proposals, stores);
    const double t0 = now_ms();
    double loss = 0.0;

    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = rng.uniform_int(0, n - 1);
      const Tensor& image = train[i].image;

      // ---- forward phase: one step per module, end to end
      {
        const Tensor feat = trainer.backbone.forward(image);
        Tensor g_feat;
        loss += mil_step(trainer.mil, feat, proposals[i], train[i].labels,
                         cfg.mil_proposals, rng, &g_feat);
        auto add = [&](Tensor g) {
          if (g.numel() == 0) return;
          if (g_feat.numel() == 0)
            g_feat = std::move(g);
          else
            for (size_t p = 0; p < g_feat.data.size(); ++p)
              g_feat.data[p] += g.data[p];
        };
        if (!s1.by_image[i].empty()) {
          auto r = trainer.det.train_step(feat, s1.by_image[i], cfg.image_size,
                                          cfg.image_size, rng);
          if (!r.skipped) {
            loss += r.rpn + r.rcnn;
            add(std::move(r.backbone_grad));
          }
        }
        if (!s2.by_image[i].empty()) {
          auto r = trainer.refine.train_step(feat, s2.by_image[i],
                                             cfg.image_size, cfg.image_size,
                                             rng);
          if (!r.skipped) {
            loss += r.rpn + r.rcnn + r.mask;
            add(std::move(r.backbone_grad));
          }
        }
        if (!s3.by_image[i].empty()) {
          auto r = trainer.seg.train_step(feat, s3.by_image[i], cfg.image_size,
                                          cfg.image_size, rng);
          if (!r.skipped) {
            loss += r.rpn + r.rcnn + r.mask;
            add(std::move(r.backbone_grad));
          }
        }
        if (g_feat.numel() > 0) trainer.backbone.backward(g_feat);
      }

      // ---- backward phase: validate each module with its successor
      {
        const Tensor feat = trainer.backbone.forward(image);
        Tensor g_feat;
        auto add = [&](Tensor g) {
          if (g.numel() == 0) return;
          if (g_feat.numel() == 0)
            g_feat = std::move(g);
          else
            for (size_t p = 0; p < g_feat.data.size(); ++p)
              g_feat.data[p] += g.data[p];
        };

        // seg inference -> refine supervision
        PseudoLabelSet from_seg = refine_with_crf(
            trainer.seg.instance_infer(feat, image), image,
            cfg.calibration.crf, cfg.detection.nms_threshold);
        if (!from_seg.empty()) {
          auto r = trainer.refine.train_step(feat, from_seg, cfg.image_size,
                                             cfg.image_size, rng);
          if (!r.skipped) {
            loss += r.rpn + r.rcnn + r.mask;
            add(std::move(r.backbone_grad));
          }
        }

        // refine detections -> det supervision
        PseudoLabelSet from_refine = detections_to_pseudo(
            trainer.refine.det.infer(feat, cfg.image_size, cfg.image_size));
        if (!from_refine.empty()) {
          auto r = trainer.det.train_step(feat, from_refine, cfg.image_size,
                                          cfg.image_size, rng);
          if (!r.skipped) {
            loss += r.rpn + r.rcnn;
            add(std::move(r.backbone_grad));
          }
        }

        // det detections -> proposal labels for cls (beta rule)
        const std::vector<Detection> dets =
            trainer.det.infer(feat, cfg.image_size, cfg.image_size);
        std::vector<int> pc(proposals[i].size(), -1);
        if (!dets.empty()) {
          const std::vector<int> lbl = backward_validation_step(
              dets, proposals[i], cfg.beta, cfg.bg_max_iou);
          for (size_t p = 0; p < lbl.size(); ++p) {
            if (lbl[p] < 0) continue;
            // map to x_c columns: class c -> c-1, background -> C
            pc[p] = lbl[p] == 0 ? cfg.num_classes : lbl[p] - 1;
          }
        }
        loss += mil_step(trainer.mil, feat, proposals[i], train[i].labels,
                         cfg.mil_proposals, rng, &g_feat, pc);

        if (g_feat.numel() > 0) trainer.backbone.backward(g_feat);
      }
    }

    loss /= cfg.batch_size;
    check_finite(loss, Stage::Seg, iter);
    opt_fb.step(everything, cfg.fb_lr, cfg.weight_decay);
    zero_params(everything);
    if (log) log(iter, "fb", loss, cfg.fb_lr, now_ms() - t0);
  }
}

std::vector<PredInstance> predict(Trainer& trainer,
                                  const std::vector<Sample>& split,
                                  Stage stage) {
  const Config& cfg = trainer.cfg;
  std::vector<PredInstance> out;

  for (size_t si = 0; si < split.size(); ++si) {
    const Sample& s = split[si];
    const Tensor feat = trainer.backbone.forward(s.image);
    const int w = s.image.dim(2), h = s.image.dim(1);

    if (stage == Stage::Cls) {
      // winner proposal per class, scored by the image-level class posterior
      const std::vector<Box> props = generate_proposals(s.image, cfg.proposals);
      if (props.empty()) continue;
      MilModule::Forward f = trainer.mil.forward(feat, props);
      ImagePrediction agg = aggregate_scores(f.x_c, f.x_p);
      for (int c = 0; c < cfg.num_classes; ++c) {
        std::vector<double> scores(props.size());
        for (size_t r = 0; r < props.size(); ++r)
          scores[r] = agg.gated.data[r * cfg.num_classes + c];
        const WinnerSelection win =
            select_winner(props, scores, cfg.calibration.nms_threshold);
        if (win.winner < 0) continue;
        PredInstance p;
        p.image = static_cast<int>(si);
        p.cls = c + 1;
        p.box = props[win.winner];
        p.score = agg.p_hat[c];
        out.push_back(std::move(p));
      }
    } else if (stage == Stage::Det) {
      for (const Detection& d : trainer.det.infer(feat, w, h)) {
        PredInstance p;
        p.image = static_cast<int>(si);
        p.cls = d.cls;
        p.box = d.box;
        p.score = d.score;
        out.push_back(std::move(p));
      }
    } else {
      InstanceModule& mod = stage == Stage::Refine ? trainer.refine : trainer.seg;
      PseudoLabelSet hyp = mod.instance_infer(feat, s.image);
      if (stage == Stage::Seg)
        hyp = refine_with_crf(hyp, s.image, cfg.crf_eval,
                              cfg.detection.nms_threshold);
      for (const InstanceHypothesis& hy : hyp) {
        PredInstance p;
        p.image = static_cast<int>(si);
        p.cls = hy.cls;
        p.box = hy.box;
        p.score = hy.weight;
        p.mask = hy.mask;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

EvalReport evaluate(Trainer& trainer, const std::vector<Sample>& split) {
  const int C = trainer.cfg.num_classes;
  EvalReport rep;
  rep.num_classes = C;
  const std::vector<PredInstance> preds = predict(trainer, split, Stage::Seg);
  rep.det_map = voc_map(preds, split, 0.5, C);
  rep.corloc = corloc(preds, split, C);
  rep.seg_miou = miou(preds, split, C);
  for (double thr : {0.25, 0.5, 0.75})
    rep.map_r[thr] = map_r(preds, split, thr, C);
  rep.abo = abo(preds, split);
  return rep;
}

}  // namespace weakseg
