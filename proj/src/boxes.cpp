#include "weakseg/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace weakseg {

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

NmsResult nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
              double threshold) {
  if (boxes.size() != scores.size())
    throw std::invalid_argument("nms: boxes/scores size mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  NmsResult res;
  std::vector<char> gone(boxes.size(), 0);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (gone[i]) continue;
    res.kept.push_back(i);
    res.suppressed.emplace_back();
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (gone[j]) continue;
      if (iou(boxes[i], boxes[j]) > threshold) {
        gone[j] = 1;
        res.suppressed.back().push_back(j);
      }
    }
  }
  return res;
}

std::array<double, 4> encode_box(const Box& anchor, const Box& target) {
  if (anchor.w() <= 0 || anchor.h() <= 0)
    throw std::invalid_argument("encode_box: degenerate anchor");
  return {(target.cx() - anchor.cx()) / anchor.w(),
          (target.cy() - anchor.cy()) / anchor.h(),
          std::log(target.w() / anchor.w()),
          std::log(target.h() / anchor.h())};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& t) {
  if (anchor.w() <= 0 || anchor.h() <= 0)
    throw std::invalid_argument("decode_box: degenerate anchor");
  const double cx = anchor.cx() + t[0] * anchor.w();
  const double cy = anchor.cy() + t[1] * anchor.h();
  const double w = anchor.w() * std::exp(t[2]);
  const double h = anchor.h() * std::exp(t[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace weakseg
