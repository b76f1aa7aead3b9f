#ifndef POCUS_COMMANDS_HPP
#define POCUS_COMMANDS_HPP

#include <optional>
#include <string>

#include "pocus/config.hpp"

namespace pocus {

struct PrepareOptions {
  bool synthetic = false;
  int synthetic_count = 4;  // training videos per class in synthetic mode
  int synthetic_decoys = 0;
  std::string split_file;  // optional explicit id,split manifest
};
void cmd_prepare(RunConfig cfg, const PrepareOptions& opt);

struct TrainOptions {
  std::string checkpoint_out;  // default <work_dir>/best.ckpt
  std::string history_out;     // default <work_dir>/history.csv
};
void cmd_train(RunConfig cfg, const TrainOptions& opt);

struct EvaluateOptions {
  std::string checkpoint;  // default <work_dir>/best.ckpt
  std::string split = "test";
  std::string out_dir;  // default <work_dir>/reports
  std::optional<double> threshold;
};
void cmd_evaluate(const RunConfig& cfg, const EvaluateOptions& opt);

struct PredictOptions {
  std::string checkpoint;
  std::string video;  // file, or directory for batch mode
  std::string out;    // machine-readable output path; stdout when empty
  std::optional<double> threshold;
};
void cmd_predict(const PredictOptions& opt);

struct PlotOptions {
  std::string history;
  std::string out_dir;
};
void cmd_plot(const PlotOptions& opt);

}  // namespace pocus

#endif  // POCUS_COMMANDS_HPP
