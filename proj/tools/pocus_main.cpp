#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pocus/commands.hpp"
#include "pocus/errors.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string video_root;
  std::string work_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  std::optional<double> lr;
  std::optional<double> threshold;
  std::string backbone;
  std::string backbone_weights;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_data, bool with_train) {
  cmd->add_option("--config", f.config, "JSON config file (flags override it)");
  cmd->add_option("--work-dir", f.work_dir, "working directory for artifacts");
  if (with_data) {
    cmd->add_option("--manifest", f.manifest, "dataset manifest (csv with id,filename,class,probe)");
    cmd->add_option("--video-root", f.video_root, "base directory for relative video paths");
  }
  cmd->add_option("--seed", f.seed, "seed for both split assignment and training");
  if (with_train) {
    cmd->add_option("--max-epochs", f.max_epochs, "training epoch budget");
    cmd->add_option("--lr", f.lr, "initial learning rate");
    cmd->add_option("--backbone", f.backbone, "feature extractor id (inception_v3 or tiny)");
    cmd->add_option("--backbone-weights", f.backbone_weights, "pretrained backbone weights file");
  }
  cmd->add_option("--threshold", f.threshold, "positive-class probability threshold");
}

pocus::RunConfig make_config(const CommonFlags& f) {
  pocus::RunConfig cfg;
  if (!f.config.empty()) cfg = pocus::load_run_config(f.config);
  if (!f.manifest.empty()) cfg.manifest_path = f.manifest;
  if (!f.video_root.empty()) cfg.video_root = f.video_root;
  if (!f.work_dir.empty()) cfg.work_dir = f.work_dir;
  if (f.seed) {
    cfg.split.seed = *f.seed;
    cfg.train.seed = *f.seed;
  }
  if (f.max_epochs) cfg.train.max_epochs = *f.max_epochs;
  if (f.lr) cfg.train.initial_lr = *f.lr;
  if (f.threshold) cfg.model.classification_threshold = *f.threshold;
  if (!f.backbone.empty()) cfg.backbone.id = f.backbone;
  if (!f.backbone_weights.empty()) cfg.backbone.weights_path = f.backbone_weights;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lung ultrasound video screening pipeline"};
  app.require_subcommand(1);

  CommonFlags prep_flags;
  pocus::PrepareOptions prep_opt;
  CLI::App* prepare = app.add_subcommand("prepare", "ingest a manifest and build the clip store");
  add_common(prepare, prep_flags, true, true);
  prepare->add_flag("--synthetic", prep_opt.synthetic, "generate a synthetic corpus instead of reading a manifest");
  prepare->add_option("--synthetic-count", prep_opt.synthetic_count, "synthetic training videos per class");
  prepare->add_option("--synthetic-decoys", prep_opt.synthetic_decoys, "extra ineligible synthetic rows");
  prepare->add_option("--split-file", prep_opt.split_file, "explicit split manifest (csv with id,split)");

  CommonFlags train_flags;
  pocus::TrainOptions train_opt;
  CLI::App* train = app.add_subcommand("train", "fit the classifier on the prepared clips");
  add_common(train, train_flags, false, true);
  train->add_option("--checkpoint", train_opt.checkpoint_out, "checkpoint output path");
  train->add_option("--history", train_opt.history_out, "history csv output path");

  CommonFlags eval_flags;
  pocus::EvaluateOptions eval_opt;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a split and write metric reports");
  add_common(evaluate, eval_flags, false, false);
  evaluate->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint to evaluate");
  evaluate->add_option("--split", eval_opt.split, "val or test");
  evaluate->add_option("--out", eval_opt.out_dir, "report output directory");

  pocus::PredictOptions pred_opt;
  CLI::App* predict = app.add_subcommand("predict", "score one video file or a directory of videos");
  predict->add_option("--checkpoint", pred_opt.checkpoint, "trained checkpoint")->required();
  predict->add_option("--video", pred_opt.video, "video file or directory")->required();
  predict->add_option("--out", pred_opt.out, "write the machine-readable record here");
  predict->add_option("--threshold", pred_opt.threshold, "positive-class probability threshold");

  pocus::PlotOptions plot_opt;
  CLI::App* plot = app.add_subcommand("plot", "render learning-curve images from a history file");
  plot->add_option("--history", plot_opt.history, "history csv from the train subcommand")->required();
  plot->add_option("--out", plot_opt.out_dir, "image output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prepare->parsed()) {
      pocus::cmd_prepare(make_config(prep_flags), prep_opt);
    } else if (train->parsed()) {
      pocus::cmd_train(make_config(train_flags), train_opt);
    } else if (evaluate->parsed()) {
      eval_opt.threshold = eval_flags.threshold;
      pocus::cmd_evaluate(make_config(eval_flags), eval_opt);
    } else if (predict->parsed()) {
      pocus::cmd_predict(pred_opt);
    } else if (plot->parsed()) {
      pocus::cmd_plot(plot_opt);
    }
  } catch (const pocus::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
