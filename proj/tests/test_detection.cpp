#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "weakseg/detection.hpp"

using namespace weakseg;
using weakseg::testutil::grad_max_rel_err;

TEST_CASE("make_anchors layout, centering, and shapes") {
  AnchorParams p;
  const int fh = 3, fw = 4;
  const auto anchors = make_anchors(fh, fw, p);
  const int k = static_cast<int>(p.scales.size() * p.ratios.size());
  REQUIRE(static_cast<int>(anchors.size()) == fh * fw * k);

  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x)
      for (int s = 0; s < static_cast<int>(p.scales.size()); ++s)
        for (int r = 0; r < static_cast<int>(p.ratios.size()); ++r) {
          const int a = s * static_cast<int>(p.ratios.size()) + r;
          const Box& b = anchors[(y * fw + x) * k + a];
          const double cx = (x + 0.5) * p.stride, cy = (y + 0.5) * p.stride;
          const double w = p.scales[s] * std::sqrt(p.ratios[r]);
          const double h = p.scales[s] / std::sqrt(p.ratios[r]);
          CHECK((b.x1 + b.x2) / 2 == doctest::Approx(cx).epsilon(1e-12));
          CHECK((b.y1 + b.y2) / 2 == doctest::Approx(cy).epsilon(1e-12));
          CHECK(b.x2 - b.x1 == doctest::Approx(w).epsilon(1e-12));
          CHECK(b.y2 - b.y1 == doctest::Approx(h).epsilon(1e-12));
        }
}

TEST_CASE("match_anchors labels by IoU and keeps the best anchor positive") {
  AnchorParams p;
  const auto anchors = make_anchors(16, 16, p);
  PseudoLabelSet pseudo(1);
  pseudo[0].cls = 1;
  pseudo[0].box = {20.0, 20.0, 44.0, 44.0};
  pseudo[0].weight = 0.8;
  Rng rng(51, 0);
  const AnchorMatch m = match_anchors(anchors, pseudo, 64, 64, rng);

  REQUIRE(!m.sampled.empty());
  bool any_pos = false;
  for (size_t i = 0; i < m.sampled.size(); ++i) {
    const Box a = anchors[m.sampled[i]].clipped(64, 64);
    const double v = iou(a, pseudo[0].box);
    if (m.labels[i] == 1) {
      any_pos = true;
      CHECK(m.weights[i] == doctest::Approx(0.8));
    } else {
      CHECK(v <= 0.3 + 1e-12);
      CHECK(m.weights[i] == 0.0);
    }
  }
  CHECK(any_pos);
  CHECK_THROWS(match_anchors(anchors, {}, 64, 64, rng));
}

TEST_CASE("smooth_l1 hand values and gradient") {
  std::array<double, 4> pred = {0.2, -0.5, 2.0, 0.0};
  std::array<double, 4> tgt = {0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> g;
  const double v = smooth_l1(pred, tgt, &g);
  // 0.5*0.04 + 0.5*0.25 + (2-0.5) + 0
  CHECK(v == doctest::Approx(0.02 + 0.125 + 1.5).epsilon(1e-12));
  CHECK(g[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[3] == 0.0);
}

TEST_CASE("rpn_loss gradients match finite differences") {
  Rng rng(52, 0);
  for (int t = 0; t < 20; ++t) {
    const int n = rng.uniform_int(4, 12);
    AnchorMatch m;
    std::vector<double> obj(n);
    std::vector<std::array<double, 4>> off(n);
    for (int i = 0; i < n; ++i) {
      m.sampled.push_back(i);
      const bool pos = rng.uniform() < 0.5;
      m.labels.push_back(pos ? 1 : 0);
      m.weights.push_back(pos ? rng.uniform(0.2, 1.0) : 0.0);
      std::array<double, 4> tg{};
      for (double& v : tg) v = rng.uniform(-1.0, 1.0);
      m.targets.push_back(tg);
      obj[i] = rng.uniform(-2.0, 2.0);
      for (double& v : off[i]) v = rng.uniform(-2.0, 2.0);
    }
    std::vector<double> gobj;
    std::vector<std::array<double, 4>> goff;
    rpn_loss(obj, off, m, 1.5, &gobj, &goff);

    std::vector<double> x(obj), g(gobj);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 4; ++j) {
        x.push_back(off[i][j]);
        g.push_back(goff[i][j]);
      }
    auto eval = [&](const std::vector<double>& v) {
      std::vector<double> o(v.begin(), v.begin() + n);
      auto of = off;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < 4; ++j) of[i][j] = v[n + i * 4 + j];
      return rpn_loss(o, of, m, 1.5);
    };
    CHECK(grad_max_rel_err(x, g, eval) < 1e-5);
  }
}

TEST_CASE("rcnn_loss gradients and alpha scaling") {
  Rng rng(53, 0);
  for (int t = 0; t < 20; ++t) {
    const int n = rng.uniform_int(3, 8), c = 3;
    Tensor logits({n, c + 1});
    for (double& v : logits.data) v = rng.uniform(-1.5, 1.5);
    std::vector<std::array<double, 4>> off(n), tgts(n);
    std::vector<int> tc(n);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
      tc[i] = rng.uniform_int(0, c);
      w[i] = rng.uniform(0.1, 1.0);
      for (int j = 0; j < 4; ++j) {
        off[i][j] = rng.uniform(-1.5, 1.5);
        tgts[i][j] = rng.uniform(-1.0, 1.0);
      }
    }
    Tensor gcls;
    std::vector<std::array<double, 4>> goff;
    const double base = rcnn_loss(logits, off, tc, tgts, w, 2.0, &gcls, &goff);

    std::vector<double> x(logits.data), g(gcls.data);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 4; ++j) {
        x.push_back(off[i][j]);
        g.push_back(goff[i][j]);
      }
    auto eval = [&](const std::vector<double>& v) {
      Tensor l = logits;
      std::copy(v.begin(), v.begin() + l.data.size(), l.data.begin());
      auto of = off;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < 4; ++j) of[i][j] = v[l.data.size() + i * 4 + j];
      return rcnn_loss(l, of, tc, tgts, w, 2.0);
    };
    CHECK(grad_max_rel_err(x, g, eval) < 1e-5);

    // alpha-scaling: scaling all weights scales the weighted terms exactly
    std::vector<double> w2(w);
    for (double& v : w2) v *= 3.0;
    const double unit = rcnn_loss(logits, off, tc, tgts,
                                  std::vector<double>(n, 1.0), 2.0);
    const double scaled = rcnn_loss(logits, off, tc, tgts, w2, 2.0);
    const double once = rcnn_loss(logits, off, tc, tgts, w, 2.0);
    CHECK(std::abs(base - once) <= 1e-15);
    // loss is linear in the weights: L(3w) - L(0w) = 3 (L(w) - L(0w))
    const double zero = rcnn_loss(logits, off, tc, tgts,
                                  std::vector<double>(n, 0.0), 2.0);
    CHECK(std::abs((scaled - zero) - 3.0 * (once - zero)) <= 1e-9);
    (void)unit;
  }
}

TEST_CASE("detection train step returns finite losses and gradient") {
  Rng rng(54, 0);
  DetectionConfig cfg;
  DetectionModule det(2, 8, 4, 32, rng, cfg);
  Tensor feat({8, 16, 16});
  for (double& v : feat.data) v = rng.uniform(0.0, 0.5);
  PseudoLabelSet pseudo(1);
  pseudo[0].cls = 1;
  pseudo[0].box = {10.0, 10.0, 40.0, 40.0};
  pseudo[0].weight = 1.0;

  auto res = det.train_step(feat, pseudo, 64, 64, rng);
  CHECK_FALSE(res.skipped);
  CHECK(std::isfinite(res.rpn));
  CHECK(std::isfinite(res.rcnn));
  REQUIRE(res.backbone_grad.shape == feat.shape);
  CHECK(all_finite(res.backbone_grad.data));

  auto skipped = det.train_step(feat, {}, 64, 64, rng);
  CHECK(skipped.skipped);
}
