#include "pocus/plot.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pocus/binio.hpp"
#include "pocus/csv.hpp"
#include "pocus/errors.hpp"
#include "pocus/trainer.hpp"

namespace pocus {

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 600;
constexpr int kLeft = 80, kRight = 40, kTop = 50, kBottom = 60;

const cv::Scalar kTrainColor(180, 119, 31);   // blue in BGR
const cv::Scalar kValColor(14, 127, 255);     // orange
const cv::Scalar kLrColor(44, 160, 44);       // green
const cv::Scalar kAxisColor(60, 60, 60);
const cv::Scalar kGridColor(225, 225, 225);

struct Series {
  std::string name;
  std::vector<double> values;  // one per epoch
  cv::Scalar color;
  bool step = false;  // draw as a step function (piecewise constant)
};

std::string tick_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Tick spacing rounded to 1/2/5 times a power of ten.
double nice_step(double range, int target_ticks) {
  if (range <= 0.0) return 1.0;
  double raw = range / target_ticks;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double nice = frac < 1.5 ? 1.0 : frac < 3.5 ? 2.0 : frac < 7.5 ? 5.0 : 10.0;
  return nice * mag;
}

void draw_chart(const std::string& path, const std::string& title,
                const std::vector<int>& epochs, const std::vector<Series>& series) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  int x0 = kLeft, x1 = kWidth - kRight, y0 = kTop, y1 = kHeight - kBottom;

  double xmin = epochs.front(), xmax = epochs.back();
  if (xmax - xmin < 1e-9) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  double ymin = series[0].values[0], ymax = ymin;
  for (const auto& s : series)
    for (double v : s.values) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (ymax - ymin < 1e-12) {
    double pad = std::abs(ymax) > 1e-12 ? std::abs(ymax) * 0.1 : 0.5;
    ymin -= pad;
    ymax += pad;
  } else {
    double pad = (ymax - ymin) * 0.08;
    ymin -= pad;
    ymax += pad;
  }

  auto px = [&](double e) { return x0 + static_cast<int>(std::lround((e - xmin) / (xmax - xmin) * (x1 - x0))); };
  auto py = [&](double v) { return y1 - static_cast<int>(std::lround((v - ymin) / (ymax - ymin) * (y1 - y0))); };

  double ystep = nice_step(ymax - ymin, 5);
  for (double v = std::ceil(ymin / ystep) * ystep; v <= ymax + 1e-12; v += ystep) {
    int y = py(v);
    cv::line(img, {x0, y}, {x1, y}, kGridColor, 1);
    std::string lab = tick_label(v);
    cv::putText(img, lab, {x0 - 8 - static_cast<int>(lab.size()) * 9, y + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.42, kAxisColor, 1, cv::LINE_AA);
  }
  int estep = std::max(1, static_cast<int>(std::lround(nice_step(xmax - xmin, 8))));
  for (int e = static_cast<int>(std::ceil(xmin)); e <= static_cast<int>(xmax); e += estep) {
    int x = px(e);
    cv::line(img, {x, y1}, {x, y1 + 5}, kAxisColor, 1);
    std::string lab = std::to_string(e);
    cv::putText(img, lab, {x - static_cast<int>(lab.size()) * 5, y1 + 22},
                cv::FONT_HERSHEY_SIMPLEX, 0.42, kAxisColor, 1, cv::LINE_AA);
  }

  cv::rectangle(img, {x0, y0}, {x1, y1}, kAxisColor, 1);
  cv::putText(img, title, {x0, y0 - 16}, cv::FONT_HERSHEY_SIMPLEX, 0.7, cv::Scalar(0, 0, 0), 1,
              cv::LINE_AA);
  cv::putText(img, "epoch", {(x0 + x1) / 2 - 24, kHeight - 18}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              kAxisColor, 1, cv::LINE_AA);

  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      int x = px(epochs[i]);
      int y = py(s.values[i]);
      if (i + 1 < s.values.size()) {
        int xn = px(epochs[i + 1]);
        int yn = py(s.values[i + 1]);
        if (s.step) {
          cv::line(img, {x, y}, {xn, y}, s.color, 2, cv::LINE_AA);
          if (yn != y) cv::line(img, {xn, y}, {xn, yn}, s.color, 2, cv::LINE_AA);
        } else {
          cv::line(img, {x, y}, {xn, yn}, s.color, 2, cv::LINE_AA);
        }
      }
      cv::circle(img, {x, y}, 3, s.color, cv::FILLED, cv::LINE_AA);
    }
  }

  int ly = y0 + 18;
  for (const auto& s : series) {
    int lx = x1 - 170;
    cv::line(img, {lx, ly - 4}, {lx + 26, ly - 4}, s.color, 2, cv::LINE_AA);
    cv::putText(img, s.name, {lx + 34, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxisColor, 1,
                cv::LINE_AA);
    ly += 20;
  }

  if (!cv::imwrite(path, img)) throw RuntimeFailure("cannot write " + path);
}

}  // namespace

std::vector<std::string> plot_curves(const std::string& history_path, const std::string& out_dir) {
  std::vector<EpochRow> history = read_history(history_path);
  if (history.empty()) throw DataError("history file " + history_path + " has no epochs");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw RuntimeFailure("cannot create directory " + out_dir);

  std::vector<int> epochs;
  std::vector<double> train_acc, val_acc, train_loss, val_loss, lr;
  for (const auto& r : history) {
    epochs.push_back(r.epoch);
    train_acc.push_back(r.train_acc);
    val_acc.push_back(r.val_acc);
    train_loss.push_back(r.train_loss);
    val_loss.push_back(r.val_loss);
    lr.push_back(r.lr);
  }

  std::vector<std::string> written;
  auto out = [&out_dir](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  written.push_back(out("accuracy.png"));
  draw_chart(written.back(), "Accuracy",
             epochs, {{"train", train_acc, kTrainColor, false}, {"validation", val_acc, kValColor, false}});
  written.push_back(out("loss.png"));
  draw_chart(written.back(), "Loss",
             epochs, {{"train", train_loss, kTrainColor, false}, {"validation", val_loss, kValColor, false}});
  written.push_back(out("learning_rate.png"));
  draw_chart(written.back(), "Learning rate", epochs, {{"learning rate", lr, kLrColor, true}});

  CsvTable t;
  t.header = {"epoch", "train_accuracy", "val_accuracy", "train_loss", "val_loss", "learning_rate"};
  for (const auto& r : history)
    t.rows.push_back({std::to_string(r.epoch), format_double(r.train_acc), format_double(r.val_acc),
                      format_double(r.train_loss), format_double(r.val_loss), format_double(r.lr)});
  written.push_back(out("curves_data.csv"));
  write_csv(written.back(), t);
  return written;
}

}  // namespace pocus
