#ifndef POCUS_EVALUATION_HPP
#define POCUS_EVALUATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "pocus/model.hpp"

namespace pocus {

struct ConfusionMatrix {
  long tp = 0, fp = 0, fn = 0, tn = 0;  // positive class = covid

  long total() const { return tp + fp + fn + tn; }
};

// Ratios with a zero denominator are absent rather than pinned to 0 or 1,
// so degenerate sets cannot inflate a report.
struct Metrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity_positive;  // recall on positives, tp/(tp+fn)
  std::optional<double> sensitivity_negative;  // specificity, tn/(tn+fp)
  std::optional<double> precision_positive;    // tp/(tp+fp)
  std::optional<double> precision_negative;    // tn/(tn+fn)
};

struct PerVideo {
  std::string id;
  int truth = 0;  // 1 positive, 0 negative
  double probability = 0.0;
  int predicted = 0;
};

struct EvalReport {
  std::string split;  // which subset the report covers, informational
  double threshold = 0.5;
  ConfusionMatrix matrix;
  Metrics metrics;
  std::vector<PerVideo> per_video;
};

Metrics metrics_from_matrix(const ConfusionMatrix& m);

EvalReport evaluate(const SequenceClassifier& model, const std::vector<FeatureSequence>& set,
                    double threshold, const std::string& split = "");

// Percentage with four significant digits, the presentation used throughout
// the reports (0.9444... -> "94.44", 0.875 -> "87.50", 1.0 -> "100.0").
std::string format_percent(double fraction);

enum class ReportFormat { kJson, kCsv };

void write_report(const std::string& path, const EvalReport& report, ReportFormat format);
EvalReport read_report(const std::string& path);  // format sniffed from content

}  // namespace pocus

#endif  // POCUS_EVALUATION_HPP
