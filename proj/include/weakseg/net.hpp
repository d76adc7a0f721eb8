#pragma once

#include <memory>
#include <string>
#include <vector>

#include "weakseg/boxes.hpp"
#include "weakseg/tensor.hpp"

namespace weakseg {

enum class LayerKind {
  Conv2d,
  Relu,
  MaxPool2d,
  FullyConnected,
  RoiPool,
  SoftmaxRows,
  Sigmoid,
};

// A learnable tensor plus its SGD momentum buffer. Gradients accumulate
// in value.grad until the optimizer step consumes them.
struct Param {
  std::string name;
  Tensor value;
  std::vector<double> velocity;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.ensure_grad();
    velocity.assign(value.data.size(), 0.0);
  }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& in) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }

  bool has_cache() const { return cached_; }
  const Tensor& input_cache() const { return in_; }
  const Tensor& output_cache() const { return out_; }

 protected:
  Tensor in_;
  Tensor out_;
  bool cached_ = false;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, int dilation);
  LayerKind kind() const override { return LayerKind::Conv2d; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  int in_channels() const { return in_ch_; }
  int ksize() const { return ksize_; }

 private:
  int in_ch_, out_ch_, ksize_, stride_, pad_, dilation_;
  Param weight_;  // (out_ch, in_ch*k*k)
  Param bias_;    // (out_ch)
  std::vector<double> col_;  // cached im2col of the last forward
  int oh_ = 0, ow_ = 0;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;
};

class MaxPool2d final : public Layer {
 public:
  explicit MaxPool2d(int ksize = 2, int stride = 2);
  LayerKind kind() const override { return LayerKind::MaxPool2d; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int ksize_, stride_;
  std::vector<int> argmax_;
};

// Rows-as-samples linear layer: input (N, ...) flattened to (N, in); a
// 1-d or (C,H,W) input is treated as a single row.
class FullyConnected final : public Layer {
 public:
  FullyConnected(int in_features, int out_features);
  LayerKind kind() const override { return LayerKind::FullyConnected; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  int in_features() const { return in_f_; }
  int out_features() const { return out_f_; }

 private:
  int in_f_, out_f_;
  Param weight_;  // (out, in)
  Param bias_;    // (out)
  int rows_ = 0;
};

// Max-pools each roi (image pixel coordinates, mapped through the feature
// stride) into a fixed (grid × grid) output: (C,H,W) -> (R, C, g, g).
// Left/top snap by flooring, right/bottom by ceiling; argmaxes recorded.
class RoiPool final : public Layer {
 public:
  RoiPool(int grid, int feature_stride);
  LayerKind kind() const override { return LayerKind::RoiPool; }
  Tensor forward(const Tensor& in) override;  // throws: rois required
  Tensor forward_rois(const Tensor& in, const std::vector<Box>& rois);
  Tensor backward(const Tensor& grad_out) override;
  int grid() const { return grid_; }

 private:
  int grid_, stride_;
  std::vector<int> argmax_;  // flat index into the input map per output cell
};

class SoftmaxRows final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::SoftmaxRows; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;
};

class Sigmoid final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Sigmoid; }
  Tensor forward(const Tensor& in) override;
  Tensor backward(const Tensor& grad_out) override;
};

// Ordered layer stack with cached activations from the latest forward pass.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Layer* add(std::unique_ptr<Layer> layer);
  Tensor forward(const Tensor& input, const std::vector<Box>* rois = nullptr);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param*> params();
  void zero_grad();
  bool has_forward_cache() const { return forward_done_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  bool forward_done_ = false;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
void sgd_step(const std::vector<Param*>& params, double lr, double momentum,
              double weight_decay);

// Adam with decoupled-from-nothing classic L2 (wd added to the gradient).
// State is positional: the same param list must be passed to every step.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void step(const std::vector<Param*>& params, double lr,
            double weight_decay);
};

enum class Init { Gaussian01, HeNormal };

std::unique_ptr<Conv2d> make_conv(int in_ch, int out_ch, int k, int stride,
                                  int pad, int dilation, Rng& rng, Init init);
std::unique_ptr<FullyConnected> make_fc(int in_f, int out_f, Rng& rng, Init init);

// Named parameter registry used for checkpoints.
struct ParamRegistry {
  std::vector<std::pair<std::string, Param*>> entries;
  void add(const std::string& prefix, const std::vector<Param*>& ps) {
    for (Param* p : ps) entries.emplace_back(prefix + "." + p->name, p);
  }
  void add_network(const std::string& prefix, Network& net);
};

// Checkpoint: 8-byte LE manifest length, JSON manifest
// [{"name","shape","byte_offset"}], then little-endian f32 blob.
void save_checkpoint(const std::string& path, const ParamRegistry& reg);
void load_checkpoint(const std::string& path, ParamRegistry& reg);

}  // namespace weakseg
