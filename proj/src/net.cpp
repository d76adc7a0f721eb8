#include "weakseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace weakseg {

namespace {

int conv_out_extent(int in, int k, int stride, int pad, int dilation) {
  const int eff = dilation * (k - 1) + 1;
  return (in + 2 * pad - eff) / stride + 1;
}

void expect(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad,
               int dilation)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      ksize_(ksize),
      stride_(stride),
      pad_(pad),
      dilation_(dilation),
      weight_("w", Tensor({out_ch, in_ch * ksize * ksize})),
      bias_("b", Tensor({out_ch})) {
  expect(dilation >= 1 && stride >= 1, "conv2d: dilation/stride must be >= 1");
}

Tensor Conv2d::forward(const Tensor& in) {
  expect(in.ndim() == 3 && in.dim(0) == in_ch_,
         "conv2d: input must be (C,H,W) with matching channels");
  const int h = in.dim(1), w = in.dim(2);
  oh_ = conv_out_extent(h, ksize_, stride_, pad_, dilation_);
  ow_ = conv_out_extent(w, ksize_, stride_, pad_, dilation_);
  expect(oh_ > 0 && ow_ > 0, "conv2d: input too small");

  const int ckk = in_ch_ * ksize_ * ksize_;
  const int64_t len = static_cast<int64_t>(oh_) * ow_;
  col_.assign(static_cast<size_t>(ckk) * len, 0.0);
  for (int c = 0; c < in_ch_; ++c) {
    const double* plane = in.data.data() + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < ksize_; ++ky) {
      for (int kx = 0; kx < ksize_; ++kx) {
        double* row =
            col_.data() + (static_cast<int64_t>(c) * ksize_ * ksize_ +
                           ky * ksize_ + kx) * len;
        for (int oy = 0; oy < oh_; ++oy) {
          const int y = oy * stride_ - pad_ + ky * dilation_;
          if (y < 0 || y >= h) continue;
          const int x0 = -pad_ + kx * dilation_;
          for (int ox = 0; ox < ow_; ++ox) {
            const int x = x0 + ox * stride_;
            if (x >= 0 && x < w) row[oy * ow_ + ox] = plane[y * w + x];
          }
        }
      }
    }
  }

  Tensor out({out_ch_, oh_, ow_});
  matmul(weight_.value.data.data(), col_.data(), out.data.data(), out_ch_,
         ckk, static_cast<int>(len));
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double b = bias_.value.data[oc];
    double* o = out.data.data() + static_cast<int64_t>(oc) * len;
    for (int64_t i = 0; i < len; ++i) o[i] += b;
  }
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  expect(cached_, "conv2d: backward without cached forward");
  expect(grad_out.same_shape(out_), "conv2d: grad_out shape mismatch");
  const int h = in_.dim(1), w = in_.dim(2);
  const int ckk = in_ch_ * ksize_ * ksize_;
  const int len = oh_ * ow_;

  weight_.value.ensure_grad();
  bias_.value.ensure_grad();
  matmul_a_bt(grad_out.data.data(), col_.data(),
              weight_.value.grad.data(), out_ch_, len, ckk);
  for (int oc = 0; oc < out_ch_; ++oc) {
    double acc = 0.0;
    const double* g = grad_out.data.data() + static_cast<int64_t>(oc) * len;
    for (int i = 0; i < len; ++i) acc += g[i];
    bias_.value.grad[oc] += acc;
  }

  std::vector<double> gcol(static_cast<size_t>(ckk) * len, 0.0);
  matmul_at_b(weight_.value.data.data(), grad_out.data.data(), gcol.data(),
              out_ch_, ckk, len);

  Tensor gin(in_.shape);
  for (int c = 0; c < in_ch_; ++c) {
    double* plane = gin.data.data() + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < ksize_; ++ky) {
      for (int kx = 0; kx < ksize_; ++kx) {
        const double* row =
            gcol.data() + (static_cast<int64_t>(c) * ksize_ * ksize_ +
                           ky * ksize_ + kx) * static_cast<int64_t>(len);
        for (int oy = 0; oy < oh_; ++oy) {
          const int y = oy * stride_ - pad_ + ky * dilation_;
          if (y < 0 || y >= h) continue;
          const int x0 = -pad_ + kx * dilation_;
          for (int ox = 0; ox < ow_; ++ox) {
            const int x = x0 + ox * stride_;
            if (x >= 0 && x < w) plane[y * w + x] += row[oy * ow_ + ox];
          }
        }
      }
    }
  }
  return gin;
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = v > 0 ? v : 0.0;
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor Relu::backward(const Tensor& grad_out) {
  expect(cached_, "relu: backward without cached forward");
  Tensor gin = grad_out;
  for (size_t i = 0; i < gin.data.size(); ++i)
    if (in_.data[i] <= 0) gin.data[i] = 0.0;
  return gin;
}

// -------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(int ksize, int stride) : ksize_(ksize), stride_(stride) {}

Tensor MaxPool2d::forward(const Tensor& in) {
  expect(in.ndim() == 3, "maxpool2d: input must be (C,H,W)");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int oh = (h - ksize_) / stride_ + 1;
  const int ow = (w - ksize_) / stride_ + 1;
  expect(oh > 0 && ow > 0, "maxpool2d: input too small");
  Tensor out({c, oh, ow});
  argmax_.assign(out.data.size(), -1);
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = in.data.data() + static_cast<int64_t>(ch) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -1e300;
        int besti = -1;
        for (int ky = 0; ky < ksize_; ++ky) {
          for (int kx = 0; kx < ksize_; ++kx) {
            const int idx = (oy * stride_ + ky) * w + ox * stride_ + kx;
            if (plane[idx] > best) {
              best = plane[idx];
              besti = idx;
            }
          }
        }
        const int64_t o = (static_cast<int64_t>(ch) * oh + oy) * ow + ox;
        out.data[o] = best;
        argmax_[o] = besti;
      }
    }
  }
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  expect(cached_, "maxpool2d: backward without cached forward");
  const int c = in_.dim(0), h = in_.dim(1), w = in_.dim(2);
  Tensor gin(in_.shape);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t oplane = grad_out.numel() / c;
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < oplane; ++i)
      gin.data[ch * plane + argmax_[ch * oplane + i]] +=
          grad_out.data[ch * oplane + i];
  return gin;
}

// --------------------------------------------------------- FullyConnected

FullyConnected::FullyConnected(int in_features, int out_features)
    : in_f_(in_features),
      out_f_(out_features),
      weight_("w", Tensor({out_features, in_features})),
      bias_("b", Tensor({out_features})) {}

Tensor FullyConnected::forward(const Tensor& in) {
  if (in.numel() == in_f_) {
    rows_ = 1;
  } else {
    expect(in.ndim() >= 2 && in.numel() % in.dim(0) == 0 &&
               in.numel() / in.dim(0) == in_f_,
           "fully-connected: input feature size mismatch");
    rows_ = in.dim(0);
  }
  Tensor out({rows_, out_f_});
  matmul_a_bt(in.data.data(), weight_.value.data.data(), out.data.data(),
              rows_, in_f_, out_f_);
  for (int r = 0; r < rows_; ++r)
    for (int j = 0; j < out_f_; ++j)
      out.data[static_cast<int64_t>(r) * out_f_ + j] += bias_.value.data[j];
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor FullyConnected::backward(const Tensor& grad_out) {
  expect(cached_, "fully-connected: backward without cached forward");
  expect(grad_out.numel() == static_cast<int64_t>(rows_) * out_f_,
         "fully-connected: grad_out shape mismatch");
  weight_.value.ensure_grad();
  bias_.value.ensure_grad();
  // gW += g^T x ; gb += column sums ; gin = g W
  matmul_at_b(grad_out.data.data(), in_.data.data(),
              weight_.value.grad.data(), rows_, out_f_, in_f_);
  for (int r = 0; r < rows_; ++r)
    for (int j = 0; j < out_f_; ++j)
      bias_.value.grad[j] += grad_out.data[static_cast<int64_t>(r) * out_f_ + j];
  Tensor gin(in_.shape);
  matmul(grad_out.data.data(), weight_.value.data.data(), gin.data.data(),
         rows_, out_f_, in_f_);
  return gin;
}

// ---------------------------------------------------------------- RoiPool

RoiPool::RoiPool(int grid, int feature_stride)
    : grid_(grid), stride_(feature_stride) {}

Tensor RoiPool::forward(const Tensor&) {
  throw std::invalid_argument("roi-pool: rois are required");
}

Tensor RoiPool::forward_rois(const Tensor& in, const std::vector<Box>& rois) {
  expect(in.ndim() == 3, "roi-pool: input must be (C,H,W)");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int r = static_cast<int>(rois.size());
  expect(r >= 1, "roi-pool: empty roi list");
  Tensor out({r, c, grid_, grid_});
  argmax_.assign(out.data.size(), -1);
  for (int ri = 0; ri < r; ++ri) {
    const Box& b = rois[ri];
    if (b.w() <= 0 || b.h() <= 0)
      throw std::invalid_argument("roi-pool: degenerate roi (zero area)");
    int fx1 = std::clamp(static_cast<int>(std::floor(b.x1 / stride_)), 0, w - 1);
    int fy1 = std::clamp(static_cast<int>(std::floor(b.y1 / stride_)), 0, h - 1);
    int fx2 = std::clamp(static_cast<int>(std::ceil(b.x2 / stride_)), fx1 + 1, w);
    int fy2 = std::clamp(static_cast<int>(std::ceil(b.y2 / stride_)), fy1 + 1, h);
    const int fw = fx2 - fx1, fh = fy2 - fy1;
    for (int ch = 0; ch < c; ++ch) {
      const double* plane = in.data.data() + static_cast<int64_t>(ch) * h * w;
      for (int gy = 0; gy < grid_; ++gy) {
        int ys = fy1 + (fh * gy) / grid_;
        int ye = fy1 + (fh * (gy + 1) + grid_ - 1) / grid_;
        if (ye <= ys) ye = ys + 1;
        for (int gx = 0; gx < grid_; ++gx) {
          int xs = fx1 + (fw * gx) / grid_;
          int xe = fx1 + (fw * (gx + 1) + grid_ - 1) / grid_;
          if (xe <= xs) xe = xs + 1;
          double best = -1e300;
          int besti = -1;
          for (int y = ys; y < ye; ++y)
            for (int x = xs; x < xe; ++x) {
              const int idx = y * w + x;
              if (plane[idx] > best) {  // ties: smallest flat index wins
                best = plane[idx];
                besti = idx;
              }
            }
          const int64_t o =
              ((static_cast<int64_t>(ri) * c + ch) * grid_ + gy) * grid_ + gx;
          out.data[o] = best;
          argmax_[o] = ch * h * w + besti;
        }
      }
    }
  }
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor RoiPool::backward(const Tensor& grad_out) {
  expect(cached_, "roi-pool: backward without cached forward");
  Tensor gin(in_.shape);
  for (size_t i = 0; i < grad_out.data.size(); ++i)
    gin.data[argmax_[i]] += grad_out.data[i];
  return gin;
}

// ------------------------------------------------------------ SoftmaxRows

Tensor SoftmaxRows::forward(const Tensor& in) {
  expect(in.ndim() == 2, "softmax-rows: input must be (N,K)");
  const int n = in.dim(0), k = in.dim(1);
  Tensor out = in;
  for (int r = 0; r < n; ++r) {
    double* row = out.data.data() + static_cast<int64_t>(r) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor SoftmaxRows::backward(const Tensor& grad_out) {
  expect(cached_, "softmax-rows: backward without cached forward");
  const int n = out_.dim(0), k = out_.dim(1);
  Tensor gin(out_.shape);
  for (int r = 0; r < n; ++r) {
    const double* y = out_.data.data() + static_cast<int64_t>(r) * k;
    const double* g = grad_out.data.data() + static_cast<int64_t>(r) * k;
    double dot = 0.0;
    for (int j = 0; j < k; ++j) dot += y[j] * g[j];
    double* o = gin.data.data() + static_cast<int64_t>(r) * k;
    for (int j = 0; j < k; ++j) o[j] = y[j] * (g[j] - dot);
  }
  return gin;
}

// ---------------------------------------------------------------- Sigmoid

Tensor Sigmoid::forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  in_ = in;
  out_ = out;
  cached_ = true;
  return out;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  expect(cached_, "sigmoid: backward without cached forward");
  Tensor gin = grad_out;
  for (size_t i = 0; i < gin.data.size(); ++i)
    gin.data[i] *= out_.data[i] * (1.0 - out_.data[i]);
  return gin;
}

// ---------------------------------------------------------------- Network

Layer* Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return layers_.back().get();
}

Tensor Network::forward(const Tensor& input, const std::vector<Box>* rois) {
  bool has_roipool = false;
  for (auto& l : layers_)
    if (l->kind() == LayerKind::RoiPool) has_roipool = true;
  if (has_roipool && rois == nullptr)
    throw std::invalid_argument("network: rois required by a roi-pool layer");
  if (!has_roipool && rois != nullptr)
    throw std::invalid_argument("network: rois given but no roi-pool layer");

  Tensor x = input;
  for (auto& l : layers_) {
    if (l->kind() == LayerKind::RoiPool)
      x = static_cast<RoiPool*>(l.get())->forward_rois(x, *rois);
    else
      x = l->forward(x);
  }
  forward_done_ = true;
  return x;
}

Tensor Network::backward(const Tensor& grad_out) {
  if (!forward_done_)
    throw std::runtime_error("network: backward without cached forward");
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> ps;
  for (auto& l : layers_)
    for (Param* p : l->params()) ps.push_back(p);
  return ps;
}

void Network::zero_grad() {
  for (Param* p : params()) p->value.zero_grad();
}

// -------------------------------------------------------------- optimizer

void sgd_step(const std::vector<Param*>& params, double lr, double momentum,
              double weight_decay) {
  if (lr <= 0) throw std::invalid_argument("sgd_step: lr must be > 0");
  for (Param* p : params) {
    p->value.ensure_grad();
    if (!all_finite(p->value.grad))
      throw std::runtime_error("training divergence: non-finite gradient in " +
                               p->name);
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      p->velocity[i] = momentum * p->velocity[i] + p->value.grad[i] +
                       weight_decay * p->value.data[i];
      p->value.data[i] -= lr * p->velocity[i];
    }
  }
}

void AdamState::step(const std::vector<Param*>& params, double lr,
                     double weight_decay) {
  if (lr <= 0) throw std::invalid_argument("AdamState::step: lr must be > 0");
  if (m.empty()) {
    for (Param* p : params) {
      m.emplace_back(p->value.data.size(), 0.0);
      v.emplace_back(p->value.data.size(), 0.0);
    }
  }
  if (m.size() != params.size())
    throw std::invalid_argument("AdamState::step: param list changed");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (size_t k = 0; k < params.size(); ++k) {
    Param* p = params[k];
    p->value.ensure_grad();
    if (!all_finite(p->value.grad))
      throw std::runtime_error("training divergence: non-finite gradient in " +
                               p->name);
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = p->value.grad[i] + weight_decay * p->value.data[i];
      m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g;
      v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g * g;
      p->value.data[i] -= lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
    }
  }
}

// ------------------------------------------------------------------ init

std::unique_ptr<Conv2d> make_conv(int in_ch, int out_ch, int k, int stride,
                                  int pad, int dilation, Rng& rng, Init init) {
  auto conv = std::make_unique<Conv2d>(in_ch, out_ch, k, stride, pad, dilation);
  const double std =
      init == Init::HeNormal ? std::sqrt(2.0 / (in_ch * k * k)) : 0.01;
  for (double& v : conv->weight().value.data) v = rng.normal(0.0, std);
  return conv;
}

std::unique_ptr<FullyConnected> make_fc(int in_f, int out_f, Rng& rng,
                                        Init init) {
  auto fc = std::make_unique<FullyConnected>(in_f, out_f);
  const double std = init == Init::HeNormal ? std::sqrt(2.0 / in_f) : 0.01;
  for (double& v : fc->weight().value.data) v = rng.normal(0.0, std);
  return fc;
}

void ParamRegistry::add_network(const std::string& prefix, Network& net) {
  int i = 0;
  for (auto& l : net.layers()) {
    auto ps = l->params();
    if (!ps.empty()) add(prefix + ".L" + std::to_string(i), ps);
    ++i;
  }
}

}  // namespace weakseg
