#include "weakseg/excitation.hpp"

#include <stdexcept>

namespace weakseg {

Tensor excitation_fc(const FullyConnected& fc, const Tensor& activations,
                     const Tensor& relevance) {
  const int in_f = fc.in_features(), out_f = fc.out_features();
  const int n = relevance.dim(0);
  if (activations.numel() != static_cast<int64_t>(n) * in_f)
    throw std::invalid_argument("excitation_fc: activation shape mismatch");
  const Tensor& w = const_cast<FullyConnected&>(fc).weight().value;

  // rows without incoming relevance contribute nothing; compact them away
  std::vector<int> live;
  for (int r = 0; r < n; ++r) {
    const double* p = relevance.data.data() + static_cast<int64_t>(r) * out_f;
    for (int i = 0; i < out_f; ++i)
      if (p[i] != 0) {
        live.push_back(r);
        break;
      }
  }
  Tensor out({n, in_f});
  if (live.empty()) return out;
  const int m = static_cast<int>(live.size());

  // positive part of the weights, shared by Z and the distribution pass
  Tensor wpos(w.shape);
  for (size_t i = 0; i < w.data.size(); ++i)
    wpos.data[i] = w.data[i] > 0 ? w.data[i] : 0.0;

  Tensor a({m, in_f}), p({m, out_f});
  for (int r = 0; r < m; ++r) {
    std::copy_n(activations.data.begin() +
                    static_cast<int64_t>(live[r]) * in_f,
                in_f, a.data.begin() + static_cast<int64_t>(r) * in_f);
    std::copy_n(relevance.data.begin() +
                    static_cast<int64_t>(live[r]) * out_f,
                out_f, p.data.begin() + static_cast<int64_t>(r) * out_f);
  }

  // Z = A W+^T; terms with Z <= 0 are dropped
  Tensor z({m, out_f});
  matmul_a_bt(a.data.data(), wpos.data.data(), z.data.data(), m, in_f, out_f);
  Tensor scaled({m, out_f});
  for (int64_t i = 0; i < z.numel(); ++i)
    scaled.data[i] = z.data[i] > 0 ? p.data[i] / z.data[i] : 0.0;

  // O = A ⊙ (scaled W+)
  Tensor msg({m, in_f});
  matmul(scaled.data.data(), wpos.data.data(), msg.data.data(), m, out_f,
         in_f);
  for (int r = 0; r < m; ++r) {
    const double* ar = a.data.data() + static_cast<int64_t>(r) * in_f;
    const double* mr = msg.data.data() + static_cast<int64_t>(r) * in_f;
    double* o = out.data.data() + static_cast<int64_t>(live[r]) * in_f;
    for (int j = 0; j < in_f; ++j) o[j] = ar[j] * mr[j];
  }
  return out;
}

Tensor excitation_bp(const std::vector<Layer*>& path, const Tensor& start) {
  Tensor rel = start;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    Layer* l = *it;
    if (!l->has_cache())
      throw std::runtime_error("excitation_bp: layer has no cached forward");
    switch (l->kind()) {
      case LayerKind::FullyConnected: {
        auto* fc = static_cast<FullyConnected*>(l);
        rel = excitation_fc(*fc, l->input_cache(), rel);
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Sigmoid:
      case LayerKind::SoftmaxRows:
        break;  // elementwise/normalizing layers pass relevance through
      case LayerKind::RoiPool: {
        // relevance has arrived at the roi-pool output; reshape to it
        Tensor shaped(l->output_cache().shape, rel.data);
        return shaped;
      }
      default:
        throw std::invalid_argument(
            "excitation_bp: unsupported layer kind in calibration head");
    }
  }
  return rel;
}

}  // namespace weakseg
