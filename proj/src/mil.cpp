#include "weakseg/mil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace weakseg {

namespace {
constexpr double kProbFloor = 1e-12;
}

Tensor normalize_weights(const Tensor& x_p) {
  if (x_p.ndim() != 2 || x_p.dim(0) < 1)
    throw std::invalid_argument("normalize_weights: need (R,C) with R >= 1");
  const int r = x_p.dim(0), c = x_p.dim(1);
  Tensor w(x_p.shape);
  for (int j = 0; j < c; ++j) {
    double mx = x_p.data[j];
    for (int i = 1; i < r; ++i) mx = std::max(mx, x_p.data[i * c + j]);
    double sum = 0.0;
    for (int i = 0; i < r; ++i) {
      w.data[i * c + j] = std::exp(x_p.data[i * c + j] - mx);
      sum += w.data[i * c + j];
    }
    for (int i = 0; i < r; ++i) w.data[i * c + j] /= sum;
  }
  return w;
}

ImagePrediction aggregate_scores(const Tensor& x_c, const Tensor& x_p) {
  const int r = x_p.dim(0), c = x_p.dim(1);
  if (x_c.ndim() != 2 || x_c.dim(0) != r || x_c.dim(1) != c + 1)
    throw std::invalid_argument("aggregate_scores: x_c must be (R,C+1)");
  ImagePrediction pred;
  pred.w_p = normalize_weights(x_p);
  pred.gated = Tensor({r, c});
  pred.s.assign(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const double v = x_c.data[i * (c + 1) + j] * pred.w_p.data[i * c + j];
      pred.gated.data[i * c + j] = v;
      pred.s[j] += v;
    }
  double mx = pred.s[0];
  for (int j = 1; j < c; ++j) mx = std::max(mx, pred.s[j]);
  pred.p_hat.assign(c, 0.0);
  double sum = 0.0;
  for (int j = 0; j < c; ++j) {
    pred.p_hat[j] = std::exp(pred.s[j] - mx);
    sum += pred.p_hat[j];
  }
  for (int j = 0; j < c; ++j) pred.p_hat[j] /= sum;
  return pred;
}

double mil_loss(const Tensor& x_c, const Tensor& x_p,
                const std::vector<int>& y, Tensor* grad_xc, Tensor* grad_xp) {
  const int r = x_p.dim(0), c = x_p.dim(1);
  if (static_cast<int>(y.size()) != c)
    throw std::invalid_argument("mil_loss: label size mismatch");
  bool any = false;
  for (int v : y) any = any || v != 0;
  if (!any) throw std::invalid_argument("mil_loss: all-zero label vector");

  const ImagePrediction pred = aggregate_scores(x_c, x_p);
  double loss = 0.0;
  std::vector<double> gs(c, 0.0);  // dL/ds
  for (int k = 0; k < c; ++k) {
    if (!y[k]) continue;
    loss -= std::log(std::max(pred.p_hat[k], kProbFloor));
    if (pred.p_hat[k] > kProbFloor) {
      for (int j = 0; j < c; ++j) gs[j] += pred.p_hat[j];
      gs[k] -= 1.0;
    }
  }

  if (grad_xc || grad_xp) {
    if (grad_xc) *grad_xc = Tensor({r, c + 1});
    if (grad_xp) *grad_xp = Tensor({r, c});
    // dL/dx1_ic = gs_c; split through the product and the column softmax
    for (int j = 0; j < c; ++j) {
      double wdot = 0.0;  // sum_i w_ij * dL/dw_ij
      for (int i = 0; i < r; ++i)
        wdot += pred.w_p.data[i * c + j] * gs[j] * x_c.data[i * (c + 1) + j];
      for (int i = 0; i < r; ++i) {
        const double w = pred.w_p.data[i * c + j];
        if (grad_xc) grad_xc->data[i * (c + 1) + j] = gs[j] * w;
        if (grad_xp)
          grad_xp->data[i * c + j] =
              w * (gs[j] * x_c.data[i * (c + 1) + j]) - w * wdot;
      }
    }
  }
  return loss;
}

double proposal_class_loss(const Tensor& logits,
                           const std::vector<int>& target_cols,
                           Tensor* grad_logits) {
  const int r = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(target_cols.size()) != r)
    throw std::invalid_argument("proposal_class_loss: label count mismatch");
  if (grad_logits) *grad_logits = Tensor(logits.shape);

  int labeled = 0;
  for (int t : target_cols)
    if (t >= 0) ++labeled;
  if (labeled == 0) return 0.0;

  double loss = 0.0;
  for (int i = 0; i < r; ++i) {
    const int t = target_cols[i];
    if (t < 0) continue;
    const double* row = logits.data.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    loss += std::log(sum) - (row[t] - mx);
    if (grad_logits) {
      double* g = grad_logits->data.data() + static_cast<int64_t>(i) * k;
      for (int j = 0; j < k; ++j)
        g[j] = std::exp(row[j] - mx) / sum / labeled;
      g[t] -= 1.0 / labeled;
    }
  }
  return loss / labeled;
}

MilModule::MilModule(int classes, int feat_channels, int roi_grid,
                     int feature_stride, int hidden, Rng& rng)
    : num_classes(classes) {
  const int roi_feat = feat_channels * roi_grid * roi_grid;
  trunk.add(std::make_unique<RoiPool>(roi_grid, feature_stride));
  trunk.add(make_fc(roi_feat, hidden, rng, Init::HeNormal));
  trunk.add(std::make_unique<Relu>());
  trunk.add(make_fc(hidden, hidden, rng, Init::HeNormal));
  trunk.add(std::make_unique<Relu>());
  cls_head.add(make_fc(hidden, classes + 1, rng, Init::Gaussian01));
  wgt_head.add(make_fc(hidden, classes, rng, Init::Gaussian01));
}

MilModule::Forward MilModule::forward(const Tensor& backbone_feat,
                                      const std::vector<Box>& rois) {
  Forward f;
  f.features = trunk.forward(backbone_feat, &rois);
  f.x_c = cls_head.forward(f.features);
  f.x_p = wgt_head.forward(f.features);
  return f;
}

Tensor MilModule::backward(const Tensor& grad_xc, const Tensor& grad_xp) {
  Tensor gfeat = cls_head.backward(grad_xc);
  const Tensor gfeat2 = wgt_head.backward(grad_xp);
  for (size_t i = 0; i < gfeat.data.size(); ++i) gfeat.data[i] += gfeat2.data[i];
  return trunk.backward(gfeat);
}

std::vector<Param*> MilModule::params() {
  std::vector<Param*> ps = trunk.params();
  for (Param* p : cls_head.params()) ps.push_back(p);
  for (Param* p : wgt_head.params()) ps.push_back(p);
  return ps;
}

void MilModule::register_params(ParamRegistry& reg, const std::string& prefix) {
  reg.add_network(prefix + ".trunk", trunk);
  reg.add_network(prefix + ".cls", cls_head);
  reg.add_network(prefix + ".wgt", wgt_head);
}

}  // namespace weakseg
