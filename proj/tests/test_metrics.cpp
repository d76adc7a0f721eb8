#include <cmath>

#include "doctest.h"
#include "weakseg/metrics.hpp"

using namespace weakseg;

namespace {

Sample make_sample(const std::string& id,
                   const std::vector<std::pair<int, Box>>& gts, int size = 32) {
  Sample s;
  s.id = id;
  s.image = Tensor({3, size, size});
  s.labels.assign(3, 0);
  for (const auto& [cls, box] : gts) {
    GtInstance g;
    g.cls = cls;
    g.box = box;
    g.mask = Tensor({size, size});
    for (int y = static_cast<int>(box.y1); y < static_cast<int>(box.y2); ++y)
      for (int x = static_cast<int>(box.x1); x < static_cast<int>(box.x2); ++x)
        g.mask.data[y * size + x] = 1.0;
    s.gt.push_back(std::move(g));
    s.labels[cls - 1] = 1;
  }
  return s;
}

PredInstance pred(int image, int cls, const Box& b, double score) {
  PredInstance p;
  p.image = image;
  p.cls = cls;
  p.box = b;
  p.score = score;
  return p;
}

}  // namespace

TEST_CASE("voc_map hand oracle: 3 detections, 2 ground truths") {
  // one image, class 1 has two GT boxes; detections ranked by score:
  //   1) hit GT A, 2) miss, 3) hit GT B
  // precision at ranks: 1, 1/2, 2/3; recall 1/2, 1/2, 1
  // envelope: p=1 on [0,0.5], p=2/3 on (0.5,1] -> AP = 0.5 + 2/3*0.5 = 5/6
  std::vector<Sample> gts = {make_sample(
      "0", {{1, {2, 2, 10, 10}}, {1, {20, 20, 28, 28}}})};
  std::vector<PredInstance> dets = {
      pred(0, 1, {2, 2, 10, 10}, 0.9),
      pred(0, 1, {12, 2, 18, 10}, 0.8),
      pred(0, 1, {20, 20, 28, 28}, 0.7),
  };
  const ApResult r = voc_map(dets, gts, 0.5, 3);
  CHECK(r.per_class.at(1) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(r.mean == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(r.per_class.count(2) == 0);  // no GT of class 2 -> excluded
}

TEST_CASE("voc_map counts duplicate hits on one GT as false positives") {
  std::vector<Sample> gts = {make_sample("0", {{1, {2, 2, 10, 10}}})};
  std::vector<PredInstance> dets = {
      pred(0, 1, {2, 2, 10, 10}, 0.9),
      pred(0, 1, {2, 2, 10, 10}, 0.8),  // duplicate
  };
  const ApResult r = voc_map(dets, gts, 0.5, 3);
  CHECK(r.per_class.at(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mAP is monotone non-increasing in the IoU threshold") {
  Rng rng(61, 0);
  std::vector<Sample> gts;
  std::vector<PredInstance> dets;
  for (int i = 0; i < 8; ++i) {
    std::vector<std::pair<int, Box>> boxes;
    const int k = rng.uniform_int(1, 3);
    for (int j = 0; j < k; ++j) {
      const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
      const double w = rng.uniform(5, 10), h = rng.uniform(5, 10);
      boxes.push_back({rng.uniform_int(1, 3), {x, y, x + w, y + h}});
    }
    gts.push_back(make_sample(std::to_string(i), boxes));
    for (const auto& [cls, b] : boxes) {
      const double jx = rng.uniform(-3, 3), jy = rng.uniform(-3, 3);
      dets.push_back(pred(i, cls, {b.x1 + jx, b.y1 + jy, b.x2 + jx, b.y2 + jy},
                          rng.uniform(0.1, 1.0)));
    }
  }
  double prev = 1.0 + 1e-12;
  for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double m = voc_map(dets, gts, thr, 3).mean;
    CHECK(m <= prev + 1e-12);
    prev = m;
  }
}

TEST_CASE("corloc uses a strict 0.5 threshold on the top candidate") {
  // exactly-half overlap: box shifted by half its width -> IoU = 1/3, miss;
  // GT at {0,0,8,8}, candidate {0,0,8,8} hits (IoU 1 > 0.5)
  std::vector<Sample> gts = {make_sample("0", {{1, {0, 0, 8, 8}}}),
                             make_sample("1", {{1, {0, 0, 8, 8}}})};
  std::vector<PredInstance> dets = {
      pred(0, 1, {0, 0, 8, 8}, 0.9),
      pred(1, 1, {4, 0, 12, 8}, 0.9),  // IoU 1/3
      pred(1, 1, {0, 0, 8, 8}, 0.1),   // better box, lower score: ignored
  };
  const ApResult r = corloc(dets, gts, 3);
  CHECK(r.per_class.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mask_iou and map_r binarize at 0.5") {
  Tensor a({2, 2}), b({2, 2});
  a.data = {0.9, 0.6, 0.1, 0.4};
  b.data = {0.7, 0.2, 0.8, 0.0};
  // a fg: {0,1}; b fg: {0,2}; intersection 1, union 3
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("miou hand oracle on a single image") {
  const int size = 4;
  Sample s = make_sample("0", {{1, {0, 0, 2, 4}}}, size);
  // prediction covers the left half exactly
  PredInstance p = pred(0, 1, {0, 0, 2, 4}, 0.9);
  p.mask = Tensor({size, size});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) p.mask.data[y * size + x] = 1.0;
  const ApResult r = miou({p}, {s}, 3);
  CHECK(r.per_class.at(0) == doctest::Approx(1.0).epsilon(1e-12));  // bg
  CHECK(r.per_class.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.per_class.count(2) == 0);
  CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("abo averages the best overlap per GT instance") {
  const int size = 8;
  Sample s = make_sample("0", {{1, {0, 0, 4, 4}}, {2, {4, 4, 8, 8}}}, size);
  PredInstance p = pred(0, 1, {0, 0, 4, 4}, 0.9);
  p.mask = s.gt[0].mask;  // perfect
  // no prediction for the class-2 instance -> overlap 0
  CHECK(abo({p}, {s}) == doctest::Approx(0.5).epsilon(1e-12));
}
