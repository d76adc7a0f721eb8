#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace weakseg {

// Axis-aligned rectangle in pixel coordinates, x2 > x1 and y2 > y1.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double area() const { return w() * h(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  Box clipped(double width, double height) const {
    Box b = *this;
    if (b.x1 < 0) b.x1 = 0;
    if (b.y1 < 0) b.y1 = 0;
    if (b.x2 > width) b.x2 = width;
    if (b.y2 > height) b.y2 = height;
    return b;
  }
  bool operator==(const Box& o) const {
    return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
  }
};

double iou(const Box& a, const Box& b);

struct NmsResult {
  std::vector<int> kept;
  // suppressed[i] lists the indices suppressed by kept[i]
  std::vector<std::vector<int>> suppressed;
};

// Greedy descending-score NMS. A box is suppressed by the first kept box
// with IoU strictly greater than the threshold. Score ties break by index.
NmsResult nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
              double threshold);

// Center/log-size offsets: t = ((cx*-cx)/w, (cy*-cy)/h, log(w*/w), log(h*/h)).
std::array<double, 4> encode_box(const Box& anchor, const Box& target);
Box decode_box(const Box& anchor, const std::array<double, 4>& t);

}  // namespace weakseg
