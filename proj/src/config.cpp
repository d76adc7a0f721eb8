#include "weakseg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace weakseg {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!trim(tok).empty()) out.push_back(std::stod(trim(tok)));
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  try {
    auto as_int = [&] { return std::stoi(value); };
    auto as_u64 = [&] { return std::stoull(value); };
    auto as_dbl = [&] { return std::stod(value); };

    if (key == "seed") seed = as_u64();
    else if (key == "threads") threads = as_int();
    else if (key == "num_classes") num_classes = as_int();
    else if (key == "image_size") image_size = as_int();
    else if (key == "backbone_channels") backbone_channels = as_int();
    else if (key == "feat_stride") feat_stride = as_int();
    else if (key == "hidden") hidden = as_int();
    else if (key == "cascade_iters") cascade_iters = as_int();
    else if (key == "cls_iters") cls_iters = as_int();
    else if (key == "det_iters") det_iters = as_int();
    else if (key == "refine_iters") refine_iters = as_int();
    else if (key == "seg_iters") seg_iters = as_int();
    else if (key == "fb_iters") fb_iters = as_int();
    else if (key == "lr") lr = as_dbl();
    else if (key == "lr_low") lr_low = as_dbl();
    else if (key == "fb_lr") fb_lr = as_dbl();
    else if (key == "momentum") momentum = as_dbl();
    else if (key == "weight_decay") weight_decay = as_dbl();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "refresh_interval") refresh_interval = as_int();
    else if (key == "beta") beta = as_dbl();
    else if (key == "bg_max_iou") bg_max_iou = as_dbl();
    else if (key == "mil_proposals") mil_proposals = as_int();
    else if (key == "mil_warm_iters") mil_warm_iters = as_int();
    else if (key == "proposal_seg_k") proposals.seg_k = as_dbl();
    else if (key == "proposal_min_segment") proposals.min_segment = as_int();
    else if (key == "proposal_min_box") proposals.min_box = as_int();
    else if (key == "proposal_cap") proposals.cap = as_int();
    else if (key == "proposal_grid_scales") {
      proposals.grid_scales.clear();
      for (double v : parse_list(value))
        proposals.grid_scales.push_back(static_cast<int>(v));
    } else if (key == "proposal_grid_ratios") proposals.grid_ratios = parse_list(value);
    else if (key == "anchor_scales") detection.anchors.scales = parse_list(value);
    else if (key == "anchor_ratios") detection.anchors.ratios = parse_list(value);
    else if (key == "det_lambda") detection.lambda = as_dbl();
    else if (key == "det_top_n") detection.top_n = as_int();
    else if (key == "det_nms") detection.nms_threshold = as_dbl();
    else if (key == "det_score_threshold") detection.score_threshold = as_dbl();
    else if (key == "calib_nms") calibration.nms_threshold = as_dbl();
    else if (key == "crf_w_appearance") {
      calibration.crf.w_appearance = as_dbl();
      crf_eval.w_appearance = as_dbl();
    } else if (key == "crf_w_smoothness") {
      calibration.crf.w_smoothness = as_dbl();
      crf_eval.w_smoothness = as_dbl();
    } else if (key == "crf_theta_alpha") {
      calibration.crf.theta_alpha = as_dbl();
      crf_eval.theta_alpha = as_dbl();
    } else if (key == "crf_theta_beta") {
      calibration.crf.theta_beta = as_dbl();
      crf_eval.theta_beta = as_dbl();
    } else if (key == "crf_theta_gamma") {
      calibration.crf.theta_gamma = as_dbl();
      crf_eval.theta_gamma = as_dbl();
    } else if (key == "crf_iterations") {
      calibration.crf.iterations = as_int();
      crf_eval.iterations = as_int();
    } else if (key == "crf_train_radius") calibration.crf.spatial_radius = as_int();
    else if (key == "crf_eval_radius") crf_eval.spatial_radius = as_int();
    else
      throw std::invalid_argument("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for config key '" + key + "': " +
                                value);
  }
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void apply_overrides(
    Config& cfg, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) cfg.set(k, v);
}

std::string Config::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["num_classes"] = num_classes;
  j["image_size"] = image_size;
  j["backbone_channels"] = backbone_channels;
  j["feat_stride"] = feat_stride;
  j["hidden"] = hidden;
  j["cascade_iters"] = cascade_iters;
  j["cls_iters"] = cls_iters;
  j["det_iters"] = det_iters;
  j["refine_iters"] = refine_iters;
  j["seg_iters"] = seg_iters;
  j["fb_iters"] = fb_iters;
  j["lr"] = lr;
  j["lr_low"] = lr_low;
  j["fb_lr"] = fb_lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["refresh_interval"] = refresh_interval;
  j["beta"] = beta;
  j["bg_max_iou"] = bg_max_iou;
  j["mil_proposals"] = mil_proposals;
  j["mil_warm_iters"] = mil_warm_iters;
  j["proposal_seg_k"] = proposals.seg_k;
  j["proposal_min_segment"] = proposals.min_segment;
  j["proposal_min_box"] = proposals.min_box;
  j["proposal_cap"] = proposals.cap;
  j["proposal_grid_scales"] = proposals.grid_scales;
  j["proposal_grid_ratios"] = proposals.grid_ratios;
  j["anchor_scales"] = detection.anchors.scales;
  j["anchor_ratios"] = detection.anchors.ratios;
  j["det_lambda"] = detection.lambda;
  j["det_top_n"] = detection.top_n;
  j["det_nms"] = detection.nms_threshold;
  j["det_score_threshold"] = detection.score_threshold;
  j["calib_nms"] = calibration.nms_threshold;
  j["crf_w_appearance"] = calibration.crf.w_appearance;
  j["crf_w_smoothness"] = calibration.crf.w_smoothness;
  j["crf_theta_alpha"] = calibration.crf.theta_alpha;
  j["crf_theta_beta"] = calibration.crf.theta_beta;
  j["crf_theta_gamma"] = calibration.crf.theta_gamma;
  j["crf_iterations"] = calibration.crf.iterations;
  j["crf_train_radius"] = calibration.crf.spatial_radius;
  j["crf_eval_radius"] = crf_eval.spatial_radius;
  return j.dump(2);
}

}  // namespace weakseg
