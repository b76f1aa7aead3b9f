#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"

#include "pocus/errors.hpp"
#include "pocus/model.hpp"
#include "pocus/rng.hpp"
#include "pocus/trainer.hpp"
#include "test_util.hpp"

using namespace pocus;

namespace {

std::vector<CallbackAction> drive(TrainConfig cfg, const std::vector<double>& values,
                                  TrainerState& state) {
  state = init_trainer_state(cfg);
  std::vector<CallbackAction> actions;
  for (double v : values) {
    actions.push_back(step_callbacks(state, v, cfg));
    if (actions.back() == CallbackAction::kStop) break;
  }
  return actions;
}

FeatureSequence labeled_seq(int label, int true_length, int steps, Rng& rng, const std::string& id) {
  FeatureSequence seq;
  seq.features = Eigen::MatrixXd::Zero(steps, 3);
  double center = label == 1 ? 0.8 : -0.8;
  for (int t = 0; t < true_length; ++t)
    for (int j = 0; j < 3; ++j) seq.features(t, j) = center + rng.uniform(-0.1, 0.1);
  seq.mask.assign(static_cast<std::size_t>(steps), 0);
  for (int t = 0; t < true_length; ++t) seq.mask[static_cast<std::size_t>(t)] = 1;
  seq.true_length = true_length;
  seq.label = label;
  seq.source_id = id;
  return seq;
}

void separable_sets(std::vector<FeatureSequence>& train_set, std::vector<FeatureSequence>& val_set) {
  Rng rng(2024);
  for (int i = 0; i < 8; ++i) {
    int T = 3 + static_cast<int>(rng.below(4));
    train_set.push_back(labeled_seq(i % 2, T, T + 2, rng, "train_" + std::to_string(i)));
  }
  for (int i = 0; i < 4; ++i) {
    int T = 3 + static_cast<int>(rng.below(4));
    val_set.push_back(labeled_seq(i % 2, T, T + 2, rng, "val_" + std::to_string(i)));
  }
}

SequenceClassifier small_model() {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.recurrent_layers = {6, 4};
  return SequenceClassifier(cfg);
}

TrainConfig small_train_cfg() {
  TrainConfig cfg;
  cfg.initial_lr = 0.05;
  cfg.max_epochs = 40;
  cfg.batch_size = 4;
  cfg.seed = 1234;
  return cfg;
}

bool same_row(const EpochRow& a, const EpochRow& b) {
  return a.epoch == b.epoch && a.train_loss == b.train_loss && a.train_acc == b.train_acc &&
         a.val_loss == b.val_loss && a.val_acc == b.val_acc && a.lr == b.lr;
}

}  // namespace

TEST_CASE("monitor names round trip") {
  CHECK(to_string(Monitor::kValLoss) == "val_loss");
  CHECK(to_string(Monitor::kValAccuracy) == "val_accuracy");
  CHECK(monitor_from_string("val_loss") == Monitor::kValLoss);
  CHECK(monitor_from_string("val_accuracy") == Monitor::kValAccuracy);
  CHECK_THROWS_AS(monitor_from_string("loss"), UsageError);
}

TEST_CASE("training configuration is validated") {
  TrainConfig good;
  CHECK_NOTHROW(good.validate());

  TrainConfig c = good;
  c.initial_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.max_epochs = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.lr_decay_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.lr_decay_factor = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.lr_patience = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.early_stop_patience = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.min_delta = -1e-9;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = good;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("a plateau first decays the rate and later stops the run") {
  TrainConfig cfg;
  cfg.initial_lr = 0.001;
  cfg.lr_patience = 3;
  cfg.early_stop_patience = 7;

  // improves for three epochs, then sits on a plateau
  std::vector<double> losses = {0.9, 0.8, 0.7, 0.71, 0.72, 0.73, 0.74, 0.74, 0.74, 0.74};
  TrainerState state;
  auto actions = drive(cfg, losses, state);

  using A = CallbackAction;
  std::vector<A> want = {A::kContinue, A::kContinue, A::kContinue, A::kContinue, A::kContinue,
                         A::kDecayed,  A::kContinue, A::kContinue, A::kDecayed,  A::kStop};
  CHECK(actions == want);
  CHECK(state.best_epoch == 3);
  CHECK(state.best_value == 0.7);
  CHECK(state.decay_count == 2);
  CHECK(state.current_lr == 0.001 * 0.5 * 0.5);
  CHECK(state.epoch == 10);
}

TEST_CASE("an improvement resets both patience counters") {
  TrainConfig cfg;
  cfg.lr_patience = 2;
  cfg.early_stop_patience = 10;

  TrainerState state;
  auto actions = drive(cfg, {1.0, 1.1, 0.9, 1.0, 1.0}, state);
  using A = CallbackAction;
  CHECK(actions == std::vector<A>{A::kContinue, A::kContinue, A::kContinue, A::kContinue, A::kDecayed});
  CHECK(state.best_epoch == 3);
  CHECK(state.decay_count == 1);
}

TEST_CASE("min_delta demands strict improvement") {
  SUBCASE("loss monitor") {
    TrainConfig cfg;
    cfg.min_delta = 0.05;
    cfg.lr_patience = 50;
    cfg.early_stop_patience = 50;
    TrainerState state = init_trainer_state(cfg);
    step_callbacks(state, 1.0, cfg);
    step_callbacks(state, 0.96, cfg);  // better, but not by enough
    CHECK(state.best_value == 1.0);
    CHECK(state.epochs_since_improvement == 1);
    step_callbacks(state, 0.94, cfg);
    CHECK(state.best_value == 0.94);
    CHECK(state.epochs_since_improvement == 0);
  }

  SUBCASE("a repeat of the best value is not an improvement") {
    TrainConfig cfg;
    cfg.lr_patience = 50;
    cfg.early_stop_patience = 50;
    TrainerState state = init_trainer_state(cfg);
    step_callbacks(state, 0.7, cfg);
    step_callbacks(state, 0.7, cfg);
    CHECK(state.best_epoch == 1);
    CHECK(state.epochs_since_improvement == 1);
  }

  SUBCASE("accuracy monitor") {
    TrainConfig cfg;
    cfg.monitor = Monitor::kValAccuracy;
    cfg.min_delta = 0.02;
    cfg.lr_patience = 50;
    cfg.early_stop_patience = 50;
    TrainerState state = init_trainer_state(cfg);
    step_callbacks(state, 0.5, cfg);
    step_callbacks(state, 0.52, cfg);  // not beyond the margin
    CHECK(state.best_value == 0.5);
    CHECK(state.epochs_since_improvement == 1);
    step_callbacks(state, 0.53, cfg);
    CHECK(state.best_value == 0.53);
  }
}

TEST_CASE("when stop and decay fall due together, stop wins") {
  TrainConfig cfg;
  cfg.lr_patience = 3;
  cfg.early_stop_patience = 6;

  std::vector<double> losses = {0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
  TrainerState state;
  auto actions = drive(cfg, losses, state);
  using A = CallbackAction;
  CHECK(actions == std::vector<A>{A::kContinue, A::kContinue, A::kContinue, A::kDecayed,
                                  A::kContinue, A::kContinue, A::kStop});
  // the seventh epoch hit both thresholds; no second decay happened
  CHECK(state.decay_count == 1);
  CHECK(state.current_lr == cfg.initial_lr * 0.5);
}

TEST_CASE("non-finite monitored values abort training") {
  TrainConfig cfg;
  TrainerState state = init_trainer_state(cfg);
  step_callbacks(state, 0.5, cfg);
  CHECK_THROWS_AS(step_callbacks(state, std::nan(""), cfg), RuntimeFailure);
  CHECK_THROWS_AS(step_callbacks(state, std::numeric_limits<double>::infinity(), cfg), RuntimeFailure);
  CHECK_THROWS_AS(step_callbacks(state, -std::numeric_limits<double>::infinity(), cfg), RuntimeFailure);
  CHECK(state.epoch == 1);  // the failed steps left no trace
}

TEST_CASE("the callback machine survives a thousand random monitored runs") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    TrainConfig cfg;
    cfg.initial_lr = 1.0;
    cfg.monitor = rng.below(2) == 0 ? Monitor::kValLoss : Monitor::kValAccuracy;
    cfg.lr_patience = 1 + static_cast<int>(rng.below(4));
    cfg.early_stop_patience = 1 + static_cast<int>(rng.below(8));
    cfg.min_delta = rng.below(2) == 0 ? 0.0 : 0.0625;

    // replay bookkeeping maintained independently of TrainerState
    double best = cfg.monitor == Monitor::kValLoss ? std::numeric_limits<double>::infinity()
                                                   : -std::numeric_limits<double>::infinity();
    int best_epoch = 0, stale = 0, stale_lr = 0, decays = 0, epoch = 0;
    double lr = cfg.initial_lr;

    TrainerState state = init_trainer_state(cfg);
    int len = 1 + static_cast<int>(rng.below(30));
    for (int i = 0; i < len; ++i) {
      double v = static_cast<double>(rng.below(9)) / 8.0;  // coarse grid forces plateaus
      CallbackAction act = step_callbacks(state, v, cfg);

      epoch += 1;
      CallbackAction want = CallbackAction::kContinue;
      bool improved = cfg.monitor == Monitor::kValLoss ? v < best - cfg.min_delta
                                                       : v > best + cfg.min_delta;
      if (improved) {
        best = v;
        best_epoch = epoch;
        stale = 0;
        stale_lr = 0;
      } else {
        stale += 1;
        stale_lr += 1;
        if (stale >= cfg.early_stop_patience) {
          want = CallbackAction::kStop;
        } else if (stale_lr >= cfg.lr_patience) {
          want = CallbackAction::kDecayed;
          lr *= cfg.lr_decay_factor;
          stale_lr = 0;
          decays += 1;
        }
      }

      REQUIRE(act == want);
      REQUIRE(state.epoch == epoch);
      REQUIRE(state.best_value == best);
      REQUIRE(state.best_epoch == best_epoch);
      REQUIRE(state.epochs_since_improvement == stale);
      REQUIRE(state.epochs_since_lr_action == stale_lr);
      REQUIRE(state.current_lr == lr);
      REQUIRE(state.decay_count == decays);
      if (act == CallbackAction::kStop) break;
    }
  }
}

TEST_CASE("training separates an easy feature space") {
  std::vector<FeatureSequence> train_set, val_set;
  separable_sets(train_set, val_set);

  SequenceClassifier model = small_model();
  TrainConfig cfg = small_train_cfg();
  TrainResult res = train(model, train_set, val_set, cfg);

  REQUIRE(!res.history.empty());
  CHECK(res.history.size() == static_cast<std::size_t>(res.epochs_run));
  CHECK(res.best_epoch >= 1);
  CHECK(res.best_epoch <= res.epochs_run);
  if (!res.stopped_early) CHECK(res.epochs_run == cfg.max_epochs);

  bool fit = false;
  for (const auto& row : res.history) fit = fit || row.train_acc == 1.0;
  CHECK(fit);
  CHECK(res.best_value < 0.3);

  SUBCASE("the learning rate column only steps down by the decay factor") {
    CHECK(res.history.front().lr == cfg.initial_lr);
    double lr = cfg.initial_lr;
    for (const auto& row : res.history) {
      if (row.lr != lr) {
        lr *= cfg.lr_decay_factor;
        CHECK(row.lr == lr);
      }
    }
  }

  SUBCASE("the best epoch's parameters are restored") {
    const EpochRow& best_row = res.history[static_cast<std::size_t>(res.best_epoch - 1)];
    CHECK(res.best_value == best_row.val_loss);
    double val_loss = 0.0;
    for (const auto& seq : val_set) val_loss += model.evaluate(seq, seq.label).loss;
    val_loss /= static_cast<double>(val_set.size());
    CHECK(std::abs(val_loss - best_row.val_loss) <= 1e-12);
  }

  SUBCASE("the same seed reproduces the run exactly") {
    SequenceClassifier again = small_model();
    TrainResult rerun = train(again, train_set, val_set, cfg);
    REQUIRE(rerun.history.size() == res.history.size());
    for (std::size_t i = 0; i < res.history.size(); ++i)
      CHECK(same_row(rerun.history[i], res.history[i]));
    CHECK(again.params().cwiseEqual(model.params()).all());

    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    SequenceClassifier third = small_model();
    TrainResult different = train(third, train_set, val_set, other);
    bool all_same = different.history.size() == res.history.size();
    if (all_same)
      for (std::size_t i = 0; i < res.history.size(); ++i)
        all_same = all_same && same_row(different.history[i], res.history[i]);
    CHECK_FALSE(all_same);
  }

  SUBCASE("accuracy monitoring tracks the best validation accuracy") {
    TrainConfig acc_cfg = cfg;
    acc_cfg.monitor = Monitor::kValAccuracy;
    SequenceClassifier acc_model = small_model();
    TrainResult acc_res = train(acc_model, train_set, val_set, acc_cfg);
    double best = 0.0;
    for (const auto& row : acc_res.history) best = std::max(best, row.val_acc);
    CHECK(acc_res.best_value == best);
    CHECK(acc_res.history[static_cast<std::size_t>(acc_res.best_epoch - 1)].val_acc == best);
  }
}

TEST_CASE("training validates its inputs") {
  std::vector<FeatureSequence> train_set, val_set;
  separable_sets(train_set, val_set);
  TrainConfig cfg = small_train_cfg();

  {
    SequenceClassifier model = small_model();
    std::vector<FeatureSequence> empty;
    CHECK_THROWS_AS(train(model, empty, val_set, cfg), DataError);
    CHECK_THROWS_AS(train(model, train_set, empty, cfg), DataError);
  }
  {
    SequenceClassifier model = small_model();
    auto unlabeled = val_set;
    unlabeled[1].label = -1;
    CHECK_THROWS_AS(train(model, train_set, unlabeled, cfg), DataError);
  }
  {
    SequenceClassifier model = small_model();
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(model, train_set, val_set, bad), UsageError);
  }
}

TEST_CASE("a single-epoch budget still yields a complete history") {
  std::vector<FeatureSequence> train_set, val_set;
  separable_sets(train_set, val_set);

  SequenceClassifier model = small_model();
  TrainConfig cfg = small_train_cfg();
  cfg.max_epochs = 1;
  TrainResult res = train(model, train_set, val_set, cfg);
  CHECK(res.history.size() == 1);
  CHECK(res.epochs_run == 1);
  CHECK(res.best_epoch == 1);  // the first epoch always improves on nothing
  CHECK_FALSE(res.stopped_early);
  CHECK(res.history[0].epoch == 1);
  CHECK(res.history[0].lr == cfg.initial_lr);
}

TEST_CASE("history files round trip exact doubles") {
  testutil::TempDir dir;
  std::string path = dir.file("history.csv");

  std::vector<EpochRow> rows;
  EpochRow r;
  r.epoch = 1;
  r.train_loss = 1.0 / 3.0;
  r.train_acc = 0.625;
  r.val_loss = 0.6931471805599453;
  r.val_acc = 2.0 / 3.0;
  r.lr = 0.001;
  rows.push_back(r);
  r.epoch = 2;
  r.train_loss = 1e-17;
  r.train_acc = 1.0;
  r.val_loss = 123456.78125;
  r.val_acc = 0.0;
  r.lr = 0.00025;
  rows.push_back(r);
  write_history(path, rows);

  auto back = read_history(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(same_row(back[i], rows[i]));

  SUBCASE("missing columns are an error") {
    testutil::write_text(path, "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.5,0.5,0.5\n");
    CHECK_THROWS_AS(read_history(path), DataError);
  }
  SUBCASE("junk numbers are an error") {
    testutil::write_text(path,
                         "epoch,train_loss,train_acc,val_loss,val_acc,lr\n1,abc,0.5,0.5,0.5,0.001\n");
    CHECK_THROWS_AS(read_history(path), DataError);
  }
  SUBCASE("a missing file is an error") {
    CHECK_THROWS_AS(read_history(dir.file("nope.csv")), DataError);
  }
}
