// Python bindings for the core operations: tensors cross the boundary as
// float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "weakseg/boxes.hpp"
#include "weakseg/calibration.hpp"
#include "weakseg/data.hpp"
#include "weakseg/densecrf.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/mil.hpp"
#include "weakseg/pipeline.hpp"
#include "weakseg/proposals.hpp"

namespace py = pybind11;
using namespace weakseg;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style |
                                               py::array::forcecast>& a) {
  std::vector<int> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[i] = static_cast<int>(a.shape(i));
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

Box to_box(const std::vector<double>& v) {
  if (v.size() != 4) throw std::invalid_argument("box needs 4 coordinates");
  return {v[0], v[1], v[2], v[3]};
}

py::list boxes_to_list(const std::vector<Box>& boxes) {
  py::list out;
  for (const Box& b : boxes)
    out.append(py::make_tuple(b.x1, b.y1, b.x2, b.y2));
  return out;
}

}  // namespace

PYBIND11_MODULE(_weakseg, mod) {
  mod.doc() = "weakly-supervised instance segmentation core";

  mod.def(
      "iou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return iou(to_box(a), to_box(b));
      },
      py::arg("box_a"), py::arg("box_b"));

  mod.def(
      "nms",
      [](const std::vector<std::vector<double>>& boxes,
         const std::vector<double>& scores, double threshold) {
        std::vector<Box> bs;
        bs.reserve(boxes.size());
        for (const auto& b : boxes) bs.push_back(to_box(b));
        const NmsResult r = nms(bs, scores, threshold);
        return py::make_tuple(r.kept, r.suppressed);
      },
      py::arg("boxes"), py::arg("scores"), py::arg("threshold") = 0.5,
      "Greedy NMS; returns (kept_indices, suppressed_groups).");

  mod.def(
      "generate_proposals",
      [](const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& image) {
        return boxes_to_list(generate_proposals(to_tensor(image),
                                                ProposalParams{}));
      },
      py::arg("image"), "Proposal boxes for a (3, H, W) image in [0, 1].");

  mod.def(
      "gen_synthetic",
      [](int n, uint64_t seed) {
        py::list out;
        for (const Sample& s : gen_synthetic(n, seed)) {
          py::dict d;
          d["image"] = to_array(s.image);
          d["labels"] = s.labels;
          py::list gt;
          for (const GtInstance& g : s.gt) {
            py::dict e;
            e["cls"] = g.cls;
            e["box"] = py::make_tuple(g.box.x1, g.box.y1, g.box.x2, g.box.y2);
            e["mask"] = to_array(g.mask);
            gt.append(e);
          }
          d["gt"] = gt;
          out.append(d);
        }
        return out;
      },
      py::arg("n"), py::arg("seed") = 42,
      "Synthetic shapes dataset: list of {image, labels, gt}.");

  mod.def(
      "normalize_weights",
      [](const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& x_p) {
        return to_array(normalize_weights(to_tensor(x_p)));
      },
      py::arg("x_p"), "Column-wise softmax over proposals.");

  mod.def(
      "mil_loss",
      [](const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& x_c,
         const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& x_p,
         const std::vector<int>& labels) {
        Tensor gxc, gxp;
        const double l =
            mil_loss(to_tensor(x_c), to_tensor(x_p), labels, &gxc, &gxp);
        return py::make_tuple(l, to_array(gxc), to_array(gxp));
      },
      py::arg("x_c"), py::arg("x_p"), py::arg("labels"),
      "Multi-label MIL loss; returns (loss, grad_x_c, grad_x_p).");

  mod.def(
      "mean_field",
      [](const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& unary,
         const py::array_t<double, py::array::c_style |
                                       py::array::forcecast>& image,
         int iterations, int spatial_radius) {
        CrfParams p;
        p.iterations = iterations;
        p.spatial_radius = spatial_radius;
        return to_array(mean_field(to_tensor(unary), to_tensor(image), p));
      },
      py::arg("unary"), py::arg("image"), py::arg("iterations") = 5,
      py::arg("spatial_radius") = 0,
      "Binary dense-CRF mean field; unary (2, H, W), image (3, H, W).");

  mod.def(
      "train_and_evaluate",
      [](int n_train, int n_test, py::dict overrides) {
        Config cfg;
        std::vector<std::pair<std::string, std::string>> kv;
        for (auto item : overrides)
          kv.emplace_back(py::str(item.first), py::str(item.second));
        apply_overrides(cfg, kv);
        auto train = gen_synthetic(n_train, cfg.seed);
        auto test = gen_synthetic(n_test, cfg.seed + 1);
        Trainer tr(cfg);
        auto stores = run_cascade_pretrain(tr, train, {});
        if (cfg.fb_iters > 0) {
          std::vector<std::vector<Box>> props(train.size());
          for (size_t i = 0; i < train.size(); ++i)
            props[i] = generate_proposals(train[i].image, cfg.proposals);
          rebuild_stores(tr, train, props, stores);
          run_forward_backward(tr, train, stores, {});
        }
        const EvalReport rep = evaluate(tr, test);
        py::dict out;
        out["det_map"] = rep.det_map.mean;
        out["corloc"] = rep.corloc.mean;
        out["seg_miou"] = rep.seg_miou.mean;
        out["abo"] = rep.abo;
        py::dict mr;
        for (const auto& [thr, ap] : rep.map_r) mr[py::float_(thr)] = ap.mean;
        out["map_r"] = mr;
        return out;
      },
      py::arg("n_train"), py::arg("n_test"),
      py::arg("overrides") = py::dict(),
      "Full pipeline on the synthetic dataset; returns the metric report. "
      "Config overrides are string key/value pairs (e.g. cls_iters='50').");
}
