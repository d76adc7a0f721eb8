#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "weakseg/calibration.hpp"
#include "weakseg/image_io.hpp"
#include "weakseg/pipeline.hpp"
#include "weakseg/proposals.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace weakseg;

namespace {

constexpr const char* kVersion = "weakseg-0.1.0";

enum LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("WEAKSEG_LOG");
  if (!env) return kInfo;
  const std::string v = env;
  if (v == "error") return kError;
  if (v == "debug") return kDebug;
  return kInfo;
}

void write_run_json(const std::string& out_dir, const Config& cfg,
                    const std::string& verb) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "run.json");
  json j = json::parse(cfg.to_json());
  j["version"] = kVersion;
  j["command"] = verb;
  f << j.dump(2) << "\n";
}

Config resolve_config(const std::string& config_path, uint64_t seed_flag,
                      bool seed_set, int threads) {
  Config cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  if (seed_set) cfg.seed = seed_flag;
  if (threads > 0) cfg.threads = threads;
  return cfg;
}

// fixed class palette (RGB in [0,1])
const double kPalette[][3] = {
    {0.95, 0.25, 0.25}, {0.25, 0.85, 0.30}, {0.30, 0.45, 0.95},
    {0.95, 0.80, 0.20}, {0.80, 0.30, 0.90}, {0.25, 0.85, 0.85},
};

void draw_overlay(Tensor& image, const PseudoLabelSet& instances) {
  const int h = image.dim(1), w = image.dim(2);
  for (const InstanceHypothesis& inst : instances) {
    const double* col = kPalette[(inst.cls - 1) % 6];
    // translucent mask, 40% alpha
    if (inst.mask.numel() == static_cast<int64_t>(h) * w)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (inst.mask.data[y * w + x] >= 0.5)
            for (int c = 0; c < 3; ++c) {
              double& px = image.data[(c * h + y) * w + x];
              px = 0.6 * px + 0.4 * col[c];
            }
    // 1-px box outline
    const int x1 = std::max(0, static_cast<int>(inst.box.x1));
    const int y1 = std::max(0, static_cast<int>(inst.box.y1));
    const int x2 = std::min(w - 1, static_cast<int>(inst.box.x2) - 1);
    const int y2 = std::min(h - 1, static_cast<int>(inst.box.y2) - 1);
    for (int x = x1; x <= x2; ++x)
      for (int y : {y1, y2})
        for (int c = 0; c < 3; ++c) image.data[(c * h + y) * w + x] = col[c];
    for (int y = y1; y <= y2; ++y)
      for (int x : {x1, x2})
        for (int c = 0; c < 3; ++c) image.data[(c * h + y) * w + x] = col[c];
  }
}

json instances_to_json(const std::string& image_path,
                       const PseudoLabelSet& instances) {
  json j;
  j["image"] = image_path;
  j["instances"] = json::array();
  for (const InstanceHypothesis& inst : instances) {
    json e;
    e["class"] = inst.cls;
    e["box"] = {inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2};
    e["score"] = inst.weight;
    if (inst.mask.numel() > 0) e["mask_rle"] = mask_to_rle(inst.mask);
    j["instances"].push_back(std::move(e));
  }
  return j;
}

int cmd_gen_data(const std::string& out, int n, const Config& cfg) {
  SynthParams sp;
  sp.num_classes = cfg.num_classes;
  sp.size = cfg.image_size;
  const std::vector<Sample> ds = gen_synthetic(n, cfg.seed, sp);
  save_dataset(out, ds);
  write_run_json(out, cfg, "gen-data");
  if (log_level() >= kInfo)
    std::cerr << "wrote " << n << " images to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out,
              const std::string& stage, const std::string& ckpt, Config cfg) {
  const std::vector<Sample> train = load_dataset(data);
  fs::create_directories(out);
  write_run_json(out, cfg, "train --stage " + stage);

  std::ofstream log_csv(fs::path(out) / "train_log.csv");
  log_csv << "iter,stage,loss,lr,wall_ms\n";
  const LogLevel lvl = log_level();
  LogFn log = [&](int iter, const std::string& st, double loss, double lr,
                  double wall_ms) {
    log_csv << iter << "," << st << "," << loss << "," << lr << ","
            << wall_ms << "\n";
    if (lvl >= kDebug ||
        (lvl >= kInfo && iter % 50 == 0))
      std::cerr << "[" << st << "] iter " << iter << " loss " << loss
                << " (" << wall_ms << " ms)\n";
  };

  Trainer trainer(cfg);
  if (stage == "cascade") {
    auto stores = run_cascade_pretrain(
        trainer, train, log, [&](Stage s) {
          trainer.save((fs::path(out) / ("stage_" + stage_name(s) + ".ckpt"))
                           .string());
        });
    trainer.save((fs::path(out) / "cascade.ckpt").string());
  } else {  // fb
    trainer.load(ckpt);
    std::vector<std::vector<Box>> proposals(train.size());
    for (size_t i = 0; i < train.size(); ++i)
      proposals[i] = generate_proposals(train[i].image, cfg.proposals);
    std::vector<PseudoLabelStore> stores;
    rebuild_stores(trainer, train, proposals, stores);
    run_forward_backward(trainer, train, stores, log);
    trainer.save((fs::path(out) / "final.ckpt").string());
  }
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& out, Config cfg) {
  Trainer trainer(cfg);
  trainer.load(ckpt);
  Tensor image = read_png_rgb(image_path);
  const Tensor feat = trainer.backbone.forward(image);
  PseudoLabelSet hyp = trainer.seg.instance_infer(feat, image);
  hyp = refine_with_crf(hyp, image, cfg.crf_eval, cfg.detection.nms_threshold);

  fs::create_directories(out);
  write_run_json(out, cfg, "infer");
  std::ofstream jf(fs::path(out) / "instances.json");
  jf << instances_to_json(image_path, hyp).dump(2) << "\n";
  draw_overlay(image, hyp);
  write_png_rgb((fs::path(out) / "overlay.png").string(), image);
  if (log_level() >= kInfo)
    std::cerr << hyp.size() << " instances -> " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& out, const std::string& metrics, Config cfg) {
  Trainer trainer(cfg);
  trainer.load(ckpt);
  const std::vector<Sample> split = load_dataset(data);
  const EvalReport rep = evaluate(trainer, split);
  fs::create_directories(out);
  write_run_json(out, cfg, "eval");
  std::ofstream csv(fs::path(out) / "eval.csv");
  csv << rep.to_csv();
  // --metrics filters the pretty text output, CSV always carries everything
  std::istringstream want(metrics);
  const std::string text = rep.to_text();
  if (metrics.empty()) {
    std::cout << text;
  } else {
    std::string m;
    std::istringstream lines(text);
    std::string line;
    std::vector<std::string> keys;
    std::istringstream ms(metrics);
    while (std::getline(ms, m, ',')) keys.push_back(m);
    while (std::getline(lines, line))
      for (const std::string& k : keys)
        if (line.find(k) != std::string::npos) {
          std::cout << line << "\n";
          break;
        }
  }
  return 0;
}

int cmd_dump_maps(const std::string& ckpt, const std::string& image_path,
                  const std::string& out, Config cfg) {
  Trainer trainer(cfg);
  trainer.load(ckpt);
  const Tensor image = read_png_rgb(image_path);
  const int h = image.dim(1), w = image.dim(2);
  const Tensor feat = trainer.backbone.forward(image);
  const std::vector<Box> props = generate_proposals(image, cfg.proposals);
  fs::create_directories(out);
  write_run_json(out, cfg, "dump-maps");
  if (props.empty()) return 0;

  MilModule::Forward f = trainer.mil.forward(feat, props);
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::vector<double> scores(props.size());
    for (size_t r = 0; r < props.size(); ++r)
      scores[r] = f.x_c.data[r * (cfg.num_classes + 1) + c];
    const WinnerSelection win =
        select_winner(props, scores, cfg.calibration.nms_threshold);
    if (win.winner < 0) continue;
    std::vector<int> rows = {win.winner};
    for (int g : win.group) rows.push_back(g);
    const std::vector<Tensor> maps =
        proposal_attention_maps(trainer.mil, props, f.x_c, rows, h, w);
    std::vector<const Tensor*> mptrs;
    for (const Tensor& m : maps) mptrs.push_back(&m);
    const Tensor attention = build_instance_attention(mptrs);

    std::vector<int> argmax_cls(props.size());
    std::vector<double> argmax_score(props.size());
    for (size_t r = 0; r < props.size(); ++r) {
      int best = 0;
      for (int k = 1; k < cfg.num_classes; ++k)
        if (f.x_c.data[r * (cfg.num_classes + 1) + k] >
            f.x_c.data[r * (cfg.num_classes + 1) + best])
          best = k;
      argmax_cls[r] = best + 1;
      argmax_score[r] = f.x_c.data[r * (cfg.num_classes + 1) + best];
    }
    const Tensor heat =
        object_heatmap(props, argmax_score, argmax_cls, c + 1, h, w);
    Tensor confident({h, w});
    for (int i = 0; i < h * w; ++i)
      confident.data[i] = std::sqrt(attention.data[i] * heat.data[i]);

    const std::string base = (fs::path(out) / ("class" + std::to_string(c + 1)))
                                 .string();
    write_png_gray(base + "_attention.png", attention);
    write_png_gray(base + "_heatmap.png", heat);
    write_png_gray(base + "_confident.png", confident);
    const Tensor q = mean_field(unary_from_confident_map(confident), image,
                                cfg.crf_eval);
    Tensor fg({h, w});
    std::copy_n(q.data.begin() + static_cast<int64_t>(h) * w,
                static_cast<int64_t>(h) * w, fg.data.begin());
    write_png_gray(base + "_crf.png", fg);
  }
  if (log_level() >= kInfo) std::cerr << "maps -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly-supervised instance segmentation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out, data, ckpt, image_path, stage = "cascade";
  std::string metrics, dump_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int n = 100, threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value)");
    cmd->add_option("--seed", seed, "RNG seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--threads", threads, "worker cap (1 = bit-exact)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--n", n, "number of images");

  CLI::App* train = app.add_subcommand("train", "train cascade or fb stage");
  add_common(train);
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--stage", stage, "cascade | fb")
      ->check(CLI::IsMember({"cascade", "fb"}));
  train->add_option("--ckpt", ckpt, "cascade checkpoint (fb stage)");

  CLI::App* infer = app.add_subcommand("infer", "run inference on one image");
  add_common(infer);
  infer->add_option("--ckpt", ckpt, "checkpoint")->required();
  infer->add_option("--image", image_path, "input PNG")->required();
  infer->add_option("--out", out, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--out", out, "output directory")->required();
  eval->add_option("--metrics", metrics, "comma list filter for text output");

  CLI::App* dump = app.add_subcommand("dump-maps", "calibration debug maps");
  add_common(dump);
  dump->add_option("--ckpt", ckpt, "checkpoint")->required();
  dump->add_option("--image", image_path, "input PNG")->required();
  dump->add_option("--dump-maps,--out", dump_dir, "output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // usage errors -> 1
  }

  try {
    const Config cfg = resolve_config(config_path, seed, seed_set, threads);
    if (gen->parsed()) return cmd_gen_data(out, n, cfg);
    if (train->parsed()) {
      if (stage == "fb" && ckpt.empty()) {
        std::cerr << "train --stage fb requires --ckpt\n";
        return 1;
      }
      return cmd_train(data, out, stage, ckpt, cfg);
    }
    if (infer->parsed()) return cmd_infer(ckpt, image_path, out, cfg);
    if (eval->parsed()) return cmd_eval(ckpt, data, out, metrics, cfg);
    if (dump->parsed()) return cmd_dump_maps(ckpt, image_path, dump_dir, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
