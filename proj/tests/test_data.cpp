#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "weakseg/data.hpp"
#include "weakseg/proposals.hpp"

using namespace weakseg;

TEST_CASE("gen_synthetic is deterministic and independent of batch size") {
  const auto a = gen_synthetic(6, 42);
  const auto b = gen_synthetic(6, 42);
  REQUIRE(a.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(a[i].image.data == b[i].image.data);
    CHECK(a[i].labels == b[i].labels);
    REQUIRE(a[i].gt.size() == b[i].gt.size());
    for (size_t j = 0; j < a[i].gt.size(); ++j)
      CHECK(a[i].gt[j].mask.data == b[i].gt[j].mask.data);
  }
  // per-image streams: a shorter run yields the same leading images
  const auto c = gen_synthetic(3, 42);
  for (int i = 0; i < 3; ++i) CHECK(a[i].image.data == c[i].image.data);
  // a different seed changes the content
  const auto d = gen_synthetic(3, 43);
  CHECK(a[0].image.data != d[0].image.data);
}

TEST_CASE("labels equal the union of instance classes") {
  const auto split = gen_synthetic(40, 7);
  for (const Sample& s : split) {
    std::vector<int> want(s.labels.size(), 0);
    REQUIRE(!s.gt.empty());
    for (const GtInstance& g : s.gt) {
      REQUIRE(g.cls >= 1);
      REQUIRE(g.cls <= static_cast<int>(s.labels.size()));
      want[g.cls - 1] = 1;
    }
    CHECK(s.labels == want);
  }
}

TEST_CASE("class frequencies are roughly balanced") {
  const auto split = gen_synthetic(300, 42);
  std::vector<int> count(3, 0);
  int total = 0;
  for (const Sample& s : split)
    for (const GtInstance& g : s.gt) {
      ++count[g.cls - 1];
      ++total;
    }
  for (int c = 0; c < 3; ++c) {
    const double frac = static_cast<double>(count[c]) / total;
    CHECK(frac > 1.0 / 3.0 - 0.1);
    CHECK(frac < 1.0 / 3.0 + 0.1);
  }
}

TEST_CASE("ground-truth instances respect the mutual-IoU cap") {
  const auto split = gen_synthetic(100, 5);
  for (const Sample& s : split)
    for (size_t i = 0; i < s.gt.size(); ++i)
      for (size_t j = i + 1; j < s.gt.size(); ++j)
        CHECK(iou(s.gt[i].box, s.gt[j].box) <= 0.3 + 1e-9);
}

TEST_CASE("rle roundtrip preserves masks exactly") {
  Rng rng(71, 0);
  for (int t = 0; t < 30; ++t) {
    const int h = rng.uniform_int(1, 20), w = rng.uniform_int(1, 20);
    Tensor m({h, w});
    for (double& v : m.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    const auto rle = mask_to_rle(m);
    const Tensor back = rle_to_mask(rle, h, w);
    CHECK(m.data == back.data);
    int sum = 0;
    for (int v : rle) sum += v;
    CHECK(sum == h * w);
  }
  // leading foreground pixel -> first run is 0 (background first)
  Tensor m({1, 3});
  m.data = {1.0, 1.0, 0.0};
  const auto rle = mask_to_rle(m);
  REQUIRE(rle.size() >= 2);
  CHECK(rle[0] == 0);
  CHECK(rle[1] == 2);
}

TEST_CASE("dataset save/load roundtrip") {
  namespace fs = std::filesystem;
  const auto split = gen_synthetic(4, 42);
  const std::string dir =
      (fs::temp_directory_path() / "weakseg_ds_test").string();
  fs::remove_all(dir);
  save_dataset(dir, split);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == split.size());
  for (size_t i = 0; i < split.size(); ++i) {
    CHECK(loaded[i].labels == split[i].labels);
    REQUIRE(loaded[i].gt.size() == split[i].gt.size());
    // images roundtrip through 8-bit png
    REQUIRE(loaded[i].image.shape == split[i].image.shape);
    for (size_t k = 0; k < split[i].image.data.size(); ++k)
      CHECK(std::abs(loaded[i].image.data[k] - split[i].image.data[k]) <=
            0.5 / 255.0 + 1e-9);
    for (size_t j = 0; j < split[i].gt.size(); ++j) {
      CHECK(loaded[i].gt[j].cls == split[i].gt[j].cls);
      CHECK(loaded[i].gt[j].mask.data == split[i].gt[j].mask.data);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("proposal recall on the easy split is at least 0.95") {
  const auto split = gen_synthetic(60, 42);
  ProposalParams pc;
  int total = 0, hit = 0;
  for (const Sample& s : split) {
    const auto props = generate_proposals(s.image, pc);
    for (const GtInstance& g : s.gt) {
      ++total;
      double best = 0.0;
      for (const Box& b : props) best = std::max(best, iou(b, g.box));
      if (best >= 0.5) ++hit;
    }
  }
  CHECK(static_cast<double>(hit) / total >= 0.95);
}
