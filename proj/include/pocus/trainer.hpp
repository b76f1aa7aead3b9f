#ifndef POCUS_TRAINER_HPP
#define POCUS_TRAINER_HPP

#include <string>
#include <vector>

#include "pocus/model.hpp"

namespace pocus {

enum class Monitor { kValLoss, kValAccuracy };

std::string to_string(Monitor m);
Monitor monitor_from_string(const std::string& s);

struct TrainConfig {
  double initial_lr = 0.001;
  int max_epochs = 30;
  double lr_decay_factor = 0.5;
  int lr_patience = 3;
  int early_stop_patience = 7;
  Monitor monitor = Monitor::kValLoss;
  double min_delta = 0.0;
  int batch_size = 4;
  std::uint64_t seed = 1234;

  void validate() const;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;  // rate in effect during this epoch
};

// Plateau-decay / early-stop bookkeeping, advanced once per epoch.
struct TrainerState {
  int epoch = 0;
  double current_lr = 0.0;
  double best_value = 0.0;
  int best_epoch = 0;
  int epochs_since_improvement = 0;
  int epochs_since_lr_action = 0;
  int decay_count = 0;
};

enum class CallbackAction { kContinue, kDecayed, kStop };

TrainerState init_trainer_state(const TrainConfig& cfg);

// Feeds one epoch's monitored value through the improvement / decay / stop
// machine. Strict improvement (beyond min_delta) resets both patience
// counters; otherwise decay fires after lr_patience stale epochs and stop
// after early_stop_patience. When both are due at once, stop wins.
CallbackAction step_callbacks(TrainerState& state, double monitored_value, const TrainConfig& cfg);

struct TrainResult {
  std::vector<EpochRow> history;
  int best_epoch = 0;
  double best_value = 0.0;
  int epochs_run = 0;
  bool stopped_early = false;
};

// Full fit: seeded init, shuffled mini-batches, Adam updates, per-epoch
// validation, callbacks, and restore of the best-epoch parameters.
TrainResult train(SequenceClassifier& model, const std::vector<FeatureSequence>& train_set,
                  const std::vector<FeatureSequence>& val_set, const TrainConfig& cfg);

void write_history(const std::string& path, const std::vector<EpochRow>& history);
std::vector<EpochRow> read_history(const std::string& path);

}  // namespace pocus

#endif  // POCUS_TRAINER_HPP
