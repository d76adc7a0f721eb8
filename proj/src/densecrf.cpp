#include "weakseg/densecrf.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace weakseg {

namespace {

void softmax2(const double* u0, const double* u1, double* q0, double* q1,
              int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    const double m = std::min(u0[i], u1[i]);
    const double e0 = std::exp(-(u0[i] - m));
    const double e1 = std::exp(-(u1[i] - m));
    q0[i] = e0 / (e0 + e1);
    q1[i] = e1 / (e0 + e1);
  }
}

}  // namespace

Tensor unary_from_confident_map(const Tensor& confident, double eps) {
  const int h = confident.dim(0), w = confident.dim(1);
  Tensor unary({2, h, w});
  for (int i = 0; i < h * w; ++i) {
    const double m = confident.data[i];
    unary.data[i] = -std::log(std::max(1.0 - m, eps));      // background
    unary.data[h * w + i] = -std::log(std::max(m, eps));    // foreground
  }
  return unary;
}

Tensor mean_field(const Tensor& unary, const Tensor& image,
                  const CrfParams& params) {
  if (unary.ndim() != 3 || unary.dim(0) != 2)
    throw std::invalid_argument("mean_field: unary must be (2,H,W)");
  if (!all_finite(unary.data))
    throw std::invalid_argument("mean_field: non-finite unary");
  const int h = unary.dim(1), w = unary.dim(2);
  if (image.ndim() != 3 || image.dim(1) != h || image.dim(2) != w)
    throw std::invalid_argument("mean_field: image/unary size mismatch");
  const int ch = image.dim(0);
  const int64_t n = static_cast<int64_t>(h) * w;

  const double inv2a = 1.0 / (2.0 * params.theta_alpha * params.theta_alpha);
  const double inv2b = 1.0 / (2.0 * params.theta_beta * params.theta_beta);
  const double inv2g = 1.0 / (2.0 * params.theta_gamma * params.theta_gamma);

  const int radius = params.spatial_radius > 0
                         ? params.spatial_radius
                         : std::max(h, w);  // window covers everything

  // spatial kernel factors depend only on the offset
  const int span = 2 * radius + 1;
  std::vector<double> k_app_sp(static_cast<size_t>(span) * span);
  std::vector<double> k_sm_sp(static_cast<size_t>(span) * span);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double d2 = static_cast<double>(dy) * dy + static_cast<double>(dx) * dx;
      k_app_sp[(dy + radius) * span + dx + radius] =
          params.w_appearance * std::exp(-d2 * inv2a);
      k_sm_sp[(dy + radius) * span + dx + radius] =
          params.w_smoothness * std::exp(-d2 * inv2g);
    }

  std::vector<double> q0(n), q1(n), m0(n), m1(n), energy0(n), energy1(n);
  softmax2(unary.data.data(), unary.data.data() + n, q0.data(), q1.data(), n);

  const bool zero_pairwise =
      params.w_appearance == 0.0 && params.w_smoothness == 0.0;

  for (int iter = 0; iter < params.iterations && !zero_pairwise; ++iter) {
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        const int64_t p = static_cast<int64_t>(py) * w + px;
        double ksum = 0.0, kq1 = 0.0;
        const int y0 = std::max(0, py - radius), y1 = std::min(h - 1, py + radius);
        const int x0 = std::max(0, px - radius), x1 = std::min(w - 1, px + radius);
        for (int qy = y0; qy <= y1; ++qy) {
          const double* app_row =
              &k_app_sp[(qy - py + radius) * span + (x0 - px + radius)];
          const double* sm_row =
              &k_sm_sp[(qy - py + radius) * span + (x0 - px + radius)];
          const int64_t qbase = static_cast<int64_t>(qy) * w;
          for (int qx = x0; qx <= x1; ++qx) {
            const int64_t q = qbase + qx;
            double cd2 = 0.0;
            for (int c = 0; c < ch; ++c) {
              const double d = image.data[c * n + p] - image.data[c * n + q];
              cd2 += d * d;
            }
            const double k =
                app_row[qx - x0] * std::exp(-cd2 * inv2b) + sm_row[qx - x0];
            ksum += k;
            kq1 += k * q1[q];
          }
        }
        // drop the q == p self term (color distance 0)
        const double kself = params.w_appearance + params.w_smoothness;
        ksum -= kself;
        kq1 -= kself * q1[p];
        // Potts: the message entering label l is the mass of the other label
        m0[p] = kq1;
        m1[p] = ksum - kq1;
      }
    }
    for (int64_t p = 0; p < n; ++p) {
      energy0[p] = unary.data[p] + m0[p];
      energy1[p] = unary.data[n + p] + m1[p];
    }
    softmax2(energy0.data(), energy1.data(), q0.data(), q1.data(), n);
  }

  Tensor out({2, h, w});
  std::copy(q0.begin(), q0.end(), out.data.begin());
  std::copy(q1.begin(), q1.end(), out.data.begin() + n);
  return out;
}

}  // namespace weakseg
