#include "pocus/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pocus/binio.hpp"
#include "pocus/csv.hpp"
#include "pocus/errors.hpp"

namespace pocus {

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

std::string to_string(Monitor m) {
  return m == Monitor::kValLoss ? "val_loss" : "val_accuracy";
}

Monitor monitor_from_string(const std::string& s) {
  if (s == "val_loss") return Monitor::kValLoss;
  if (s == "val_accuracy") return Monitor::kValAccuracy;
  throw UsageError("unknown monitor '" + s + "' (expected val_loss or val_accuracy)");
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw UsageError("initial_lr must be positive");
  if (max_epochs < 1) throw UsageError("max_epochs must be at least 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
    throw UsageError("lr_decay_factor must be in (0, 1)");
  if (lr_patience < 1) throw UsageError("lr_patience must be at least 1");
  if (early_stop_patience < 1) throw UsageError("early_stop_patience must be at least 1");
  if (min_delta < 0.0) throw UsageError("min_delta must be non-negative");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
}

TrainerState init_trainer_state(const TrainConfig& cfg) {
  TrainerState state;
  state.current_lr = cfg.initial_lr;
  state.best_value = cfg.monitor == Monitor::kValLoss ? std::numeric_limits<double>::infinity()
                                                      : -std::numeric_limits<double>::infinity();
  return state;
}

CallbackAction step_callbacks(TrainerState& state, double monitored_value, const TrainConfig& cfg) {
  if (!std::isfinite(monitored_value))
    throw RuntimeFailure("monitored value is not finite at epoch " + std::to_string(state.epoch + 1));
  state.epoch += 1;
  bool improved = cfg.monitor == Monitor::kValLoss
                      ? monitored_value < state.best_value - cfg.min_delta
                      : monitored_value > state.best_value + cfg.min_delta;
  if (improved) {
    state.best_value = monitored_value;
    state.best_epoch = state.epoch;
    state.epochs_since_improvement = 0;
    state.epochs_since_lr_action = 0;
    return CallbackAction::kContinue;
  }
  state.epochs_since_improvement += 1;
  state.epochs_since_lr_action += 1;
  if (state.epochs_since_improvement >= cfg.early_stop_patience) return CallbackAction::kStop;
  if (state.epochs_since_lr_action >= cfg.lr_patience) {
    state.current_lr *= cfg.lr_decay_factor;
    state.decay_count += 1;
    state.epochs_since_lr_action = 0;
    return CallbackAction::kDecayed;
  }
  return CallbackAction::kContinue;
}

TrainResult train(SequenceClassifier& model, const std::vector<FeatureSequence>& train_set,
                  const std::vector<FeatureSequence>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (val_set.empty()) throw DataError("validation set is empty");
  for (const auto* set : {&train_set, &val_set})
    for (const auto& seq : *set)
      if (seq.label != 0 && seq.label != 1)
        throw DataError("sequence " + seq.source_id + " has no binary label");

  model.init_params(Rng::derived(cfg.seed, "model/init"));
  Rng shuffle_rng = Rng::derived(cfg.seed, "train/shuffle");
  Rng dropout_rng = Rng::derived(cfg.seed, "train/dropout");
  bool use_dropout = model.config().dropout_rate > 0.0;

  int n = static_cast<int>(train_set.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  int p = model.param_count();
  Eigen::VectorXd grad(p);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd best_theta = model.params();
  long adam_step = 0;

  TrainerState state = init_trainer_state(cfg);
  TrainResult result;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int correct = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int bs = std::min(cfg.batch_size, n - start);
      grad.setZero();
      double batch_loss = 0.0;
      for (int k = 0; k < bs; ++k) {
        const auto& seq = train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(start + k)])];
        ForwardResult res = model.backward(seq, seq.label, grad, use_dropout ? &dropout_rng : nullptr);
        batch_loss += res.loss;
        if (model.predict(res.probability) == (seq.label == 1)) ++correct;
      }
      grad /= static_cast<double>(bs);
      batch_loss /= static_cast<double>(bs);
      if (!std::isfinite(batch_loss))
        throw RuntimeFailure("training loss is not finite at epoch " + std::to_string(epoch));
      ++adam_step;
      double mc = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_step));
      double vc = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_step));
      auto& theta = model.params();
      for (int i = 0; i < p; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        theta[i] -= state.current_lr * (m[i] / mc) / (std::sqrt(v[i] / vc) + kAdamEps);
      }
      loss_sum += batch_loss * bs;
    }

    double val_loss_sum = 0.0;
    int val_correct = 0;
    for (const auto& seq : val_set) {
      ForwardResult res = model.evaluate(seq, seq.label);
      val_loss_sum += res.loss;
      if (model.predict(res.probability) == (seq.label == 1)) ++val_correct;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / n;
    row.train_acc = static_cast<double>(correct) / n;
    row.val_loss = val_loss_sum / static_cast<double>(val_set.size());
    row.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_set.size());
    row.lr = state.current_lr;

    double monitored = cfg.monitor == Monitor::kValLoss ? row.val_loss : row.val_acc;
    CallbackAction act = step_callbacks(state, monitored, cfg);
    result.history.push_back(row);
    result.epochs_run = epoch;
    if (state.best_epoch == epoch) best_theta = model.params();
    if (act == CallbackAction::kStop) {
      result.stopped_early = true;
      break;
    }
  }

  model.params() = best_theta;
  result.best_epoch = state.best_epoch;
  result.best_value = state.best_value;
  return result;
}

void write_history(const std::string& path, const std::vector<EpochRow>& history) {
  CsvTable t;
  t.header = {"epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"};
  for (const auto& r : history)
    t.rows.push_back({std::to_string(r.epoch), format_double(r.train_loss),
                      format_double(r.train_acc), format_double(r.val_loss),
                      format_double(r.val_acc), format_double(r.lr)});
  write_csv(path, t);
}

std::vector<EpochRow> read_history(const std::string& path) {
  CsvTable t = read_csv(path);
  int c_epoch = t.column("epoch"), c_tl = t.column("train_loss"), c_ta = t.column("train_acc");
  int c_vl = t.column("val_loss"), c_va = t.column("val_acc"), c_lr = t.column("lr");
  for (int c : {c_epoch, c_tl, c_ta, c_vl, c_va, c_lr})
    if (c < 0) throw DataError("history file " + path + " is missing required columns");
  std::vector<EpochRow> out;
  std::string ctx = "history file " + path;
  for (const auto& row : t.rows) {
    EpochRow r;
    r.epoch = static_cast<int>(parse_long(row[static_cast<std::size_t>(c_epoch)], ctx));
    r.train_loss = parse_double(row[static_cast<std::size_t>(c_tl)], ctx);
    r.train_acc = parse_double(row[static_cast<std::size_t>(c_ta)], ctx);
    r.val_loss = parse_double(row[static_cast<std::size_t>(c_vl)], ctx);
    r.val_acc = parse_double(row[static_cast<std::size_t>(c_va)], ctx);
    r.lr = parse_double(row[static_cast<std::size_t>(c_lr)], ctx);
    out.push_back(r);
  }
  return out;
}

}  // namespace pocus
