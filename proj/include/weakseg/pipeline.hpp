#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "weakseg/config.hpp"
#include "weakseg/data.hpp"
#include "weakseg/instance_seg.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/mil.hpp"

namespace weakseg {

enum class Stage { Cls, Det, Refine, Seg };
std::string stage_name(Stage s);

// Versioned pseudo-label map: image index -> labels from the producing
// stage; `fallback` flags entries inherited from the previous version.
struct PseudoLabelStore {
  std::string producer;
  std::map<int, PseudoLabelSet> by_image;
  std::map<int, bool> fallback;
};

// All model state of one run: shared backbone plus the four cascaded
// modules.
struct Trainer {
  Config cfg;
  Network backbone;
  MilModule mil;
  DetectionModule det;
  InstanceModule refine;
  InstanceModule seg;

  explicit Trainer(const Config& config);

  ParamRegistry registry();             // stable names for checkpoints
  std::vector<Param*> backbone_params();
  std::vector<Param*> stage_params(Stage s);  // heads only (frozen backbone)
  std::vector<Param*> all_params();

  void save(const std::string& path);
  void load(const std::string& path);
};

Network make_backbone(int out_channels, Rng& rng);

// Per-proposal labels from detections: class of the max-IoU detection when
// that IoU > beta; background (0) when max IoU < bg_max_iou; -1 otherwise
// (excluded from the proposal classification loss).
std::vector<int> backward_validation_step(const std::vector<Detection>& dets,
                                          const std::vector<Box>& proposals,
                                          double beta = 0.5,
                                          double bg_max_iou = 0.1);

using LogFn = std::function<void(int iter, const std::string& stage,
                                 double loss, double lr, double wall_ms)>;

// Cascaded pre-training: trains cls/det/refine/seg sequentially with the
// backbone frozen, producing one pseudo-label store per stage boundary.
// Returns the store history {S1, S2, S3}; `on_stage_done` fires after each
// stage (checkpointing hook). Throws std::runtime_error naming the stage
// and iteration if a loss goes non-finite.
std::vector<PseudoLabelStore> run_cascade_pretrain(
    Trainer& trainer, const std::vector<Sample>& train, const LogFn& log,
    const std::function<void(Stage)>& on_stage_done = {});

// Regenerates the three pseudo-label stores (cls calibration, det dense
// calibration, refine inference + CRF) from the current model state,
// keeping previous entries where a producer yields nothing.
void rebuild_stores(Trainer& trainer, const std::vector<Sample>& train,
                    const std::vector<std::vector<Box>>& proposals,
                    std::vector<PseudoLabelStore>& stores);

// Forward-backward curriculum learning with the backbone unfrozen —
// alternating a forward step of every module and a backward validation
// step, refreshing the pseudo-label stores every cfg.refresh_interval
// iterations. `stores` is the cascade output and is updated in place.
void run_forward_backward(Trainer& trainer, const std::vector<Sample>& train,
                          std::vector<PseudoLabelStore>& stores,
                          const LogFn& log);

// Stage-wise localization/instance predictions for evaluation: Cls uses
// proposal calibration, Det the detector, Refine/Seg dense instance
// inference (Seg adds the final CRF refinement).
std::vector<PredInstance> predict(Trainer& trainer,
                                  const std::vector<Sample>& split,
                                  Stage stage);

EvalReport evaluate(Trainer& trainer, const std::vector<Sample>& split);

}  // namespace weakseg
