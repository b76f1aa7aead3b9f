#include "pocus/evaluation.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "pocus/binio.hpp"
#include "pocus/csv.hpp"
#include "pocus/errors.hpp"

namespace pocus {

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json metric_json(double value) {
  return {{"value", value}, {"percent", format_percent(value)}};
}

nlohmann::json metric_json(const std::optional<double>& value) {
  if (!value) return nullptr;
  return metric_json(*value);
}

std::optional<double> metric_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.at("value").get<double>();
}

std::string label_name(int v) { return v == 1 ? "positive" : "negative"; }

int label_value(const std::string& s, const std::string& path) {
  if (s == "positive") return 1;
  if (s == "negative") return 0;
  throw DataError("bad label '" + s + "' in report " + path);
}

std::string opt_str(const std::optional<double>& v) {
  return v ? format_double(*v) : "null";
}

std::string opt_pct(const std::optional<double>& v) {
  return v ? format_percent(*v) : "null";
}

std::optional<double> opt_parse(const std::string& s, const std::string& ctx) {
  if (s == "null") return std::nullopt;
  return parse_double(s, ctx);
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw DataError("cannot parse report " + path);
  }
  EvalReport rep;
  try {
    if (j.at("format").get<std::string>() != "pocus-eval-report")
      throw DataError("not an evaluation report: " + path);
    rep.split = j.at("split").get<std::string>();
    rep.threshold = j.at("threshold").get<double>();
    const auto& cm = j.at("confusion");
    rep.matrix.tp = cm.at("tp").get<long>();
    rep.matrix.fp = cm.at("fp").get<long>();
    rep.matrix.fn = cm.at("fn").get<long>();
    rep.matrix.tn = cm.at("tn").get<long>();
    const auto& me = j.at("metrics");
    rep.metrics.accuracy = me.at("accuracy").at("value").get<double>();
    rep.metrics.sensitivity_positive = metric_from_json(me.at("sensitivity_positive"));
    rep.metrics.sensitivity_negative = metric_from_json(me.at("sensitivity_negative"));
    rep.metrics.precision_positive = metric_from_json(me.at("precision_positive"));
    rep.metrics.precision_negative = metric_from_json(me.at("precision_negative"));
    for (const auto& pv : j.at("per_video")) {
      PerVideo v;
      v.id = pv.at("id").get<std::string>();
      v.truth = label_value(pv.at("truth").get<std::string>(), path);
      v.probability = pv.at("probability").get<double>();
      v.predicted = label_value(pv.at("predicted").get<std::string>(), path);
      rep.per_video.push_back(v);
    }
  } catch (const nlohmann::json::exception&) {
    throw DataError("cannot parse report " + path);
  }
  return rep;
}

EvalReport read_report_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::vector<std::string> expect = {"section", "key", "value", "value2", "value3"};
  if (t.header != expect) throw DataError("not an evaluation report: " + path);
  EvalReport rep;
  std::string ctx = "report " + path;
  bool have_split = false, have_threshold = false;
  int confusion_fields = 0, metric_fields = 0;
  for (const auto& row : t.rows) {
    if (row.size() != expect.size()) throw DataError("malformed row in report " + path);
    const std::string& section = row[0];
    const std::string& key = row[1];
    if (section == "meta") {
      if (key == "split") {
        rep.split = row[2];
        have_split = true;
      } else if (key == "threshold") {
        rep.threshold = parse_double(row[2], ctx);
        have_threshold = true;
      } else {
        throw DataError("unrecognized meta row '" + key + "' in " + path);
      }
    } else if (section == "confusion") {
      long v = parse_long(row[2], ctx);
      if (key == "tp")
        rep.matrix.tp = v;
      else if (key == "fp")
        rep.matrix.fp = v;
      else if (key == "fn")
        rep.matrix.fn = v;
      else if (key == "tn")
        rep.matrix.tn = v;
      else
        throw DataError("unrecognized confusion row '" + key + "' in " + path);
      ++confusion_fields;
    } else if (section == "metric") {
      std::optional<double> v = opt_parse(row[2], ctx);
      if (key == "accuracy") {
        if (!v) throw DataError("accuracy missing in " + path);
        rep.metrics.accuracy = *v;
      } else if (key == "sensitivity_positive")
        rep.metrics.sensitivity_positive = v;
      else if (key == "sensitivity_negative")
        rep.metrics.sensitivity_negative = v;
      else if (key == "precision_positive")
        rep.metrics.precision_positive = v;
      else if (key == "precision_negative")
        rep.metrics.precision_negative = v;
      else
        throw DataError("unrecognized metric row '" + key + "' in " + path);
      ++metric_fields;
    } else if (section == "video") {
      PerVideo v;
      v.id = key;
      v.truth = label_value(row[2], path);
      v.probability = parse_double(row[3], ctx);
      v.predicted = label_value(row[4], path);
      rep.per_video.push_back(v);
    } else {
      throw DataError("unrecognized section '" + section + "' in " + path);
    }
  }
  if (!have_split || !have_threshold || confusion_fields != 4 || metric_fields != 5)
    throw DataError("report " + path + " is incomplete");
  return rep;
}

}  // namespace

Metrics metrics_from_matrix(const ConfusionMatrix& m) {
  if (m.tp < 0 || m.fp < 0 || m.fn < 0 || m.tn < 0)
    throw DataError("confusion matrix has negative counts");
  if (m.total() <= 0) throw DataError("confusion matrix is empty");
  Metrics out;
  out.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  out.sensitivity_positive = ratio(m.tp, m.tp + m.fn);
  out.sensitivity_negative = ratio(m.tn, m.tn + m.fp);
  out.precision_positive = ratio(m.tp, m.tp + m.fp);
  out.precision_negative = ratio(m.tn, m.tn + m.fn);
  return out;
}

EvalReport evaluate(const SequenceClassifier& model, const std::vector<FeatureSequence>& set,
                    double threshold, const std::string& split) {
  if (set.empty()) throw DataError("evaluation set is empty");
  EvalReport rep;
  rep.split = split;
  rep.threshold = threshold;
  for (const auto& seq : set) {
    if (seq.label != 0 && seq.label != 1)
      throw DataError("sequence " + seq.source_id + " has no binary label");
    PerVideo v;
    v.id = seq.source_id;
    v.truth = seq.label;
    v.probability = model.forward(seq);
    v.predicted = v.probability >= threshold ? 1 : 0;
    rep.per_video.push_back(v);
    if (v.truth == 1)
      (v.predicted == 1 ? rep.matrix.tp : rep.matrix.fn) += 1;
    else
      (v.predicted == 1 ? rep.matrix.fp : rep.matrix.tn) += 1;
  }
  rep.metrics = metrics_from_matrix(rep.matrix);
  return rep;
}

std::string format_percent(double fraction) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%#.4g", fraction * 100.0);
  return buf;
}

void write_report(const std::string& path, const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    nlohmann::json j;
    j["format"] = "pocus-eval-report";
    j["split"] = report.split;
    j["threshold"] = report.threshold;
    j["confusion"] = {{"tp", report.matrix.tp},
                      {"fp", report.matrix.fp},
                      {"fn", report.matrix.fn},
                      {"tn", report.matrix.tn}};
    j["metrics"] = {
        {"accuracy", metric_json(report.metrics.accuracy)},
        {"sensitivity_positive", metric_json(report.metrics.sensitivity_positive)},
        {"sensitivity_negative", metric_json(report.metrics.sensitivity_negative)},
        {"precision_positive", metric_json(report.metrics.precision_positive)},
        {"precision_negative", metric_json(report.metrics.precision_negative)},
    };
    j["per_video"] = nlohmann::json::array();
    for (const auto& v : report.per_video)
      j["per_video"].push_back({{"id", v.id},
                                {"truth", label_name(v.truth)},
                                {"probability", v.probability},
                                {"predicted", label_name(v.predicted)}});
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw RuntimeFailure("cannot write " + path);
    return;
  }

  CsvTable t;
  t.header = {"section", "key", "value", "value2", "value3"};
  t.rows.push_back({"meta", "split", report.split, "", ""});
  t.rows.push_back({"meta", "threshold", format_double(report.threshold), "", ""});
  t.rows.push_back({"confusion", "tp", std::to_string(report.matrix.tp), "", ""});
  t.rows.push_back({"confusion", "fp", std::to_string(report.matrix.fp), "", ""});
  t.rows.push_back({"confusion", "fn", std::to_string(report.matrix.fn), "", ""});
  t.rows.push_back({"confusion", "tn", std::to_string(report.matrix.tn), "", ""});
  const auto& m = report.metrics;
  t.rows.push_back({"metric", "accuracy", format_double(m.accuracy), format_percent(m.accuracy), ""});
  t.rows.push_back({"metric", "sensitivity_positive", opt_str(m.sensitivity_positive),
                    opt_pct(m.sensitivity_positive), ""});
  t.rows.push_back({"metric", "sensitivity_negative", opt_str(m.sensitivity_negative),
                    opt_pct(m.sensitivity_negative), ""});
  t.rows.push_back({"metric", "precision_positive", opt_str(m.precision_positive),
                    opt_pct(m.precision_positive), ""});
  t.rows.push_back({"metric", "precision_negative", opt_str(m.precision_negative),
                    opt_pct(m.precision_negative), ""});
  for (const auto& v : report.per_video)
    t.rows.push_back(
        {"video", v.id, label_name(v.truth), format_double(v.probability), label_name(v.predicted)});
  write_csv(path, t);
}

EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path);
  char first = 0;
  in >> std::ws >> first;
  in.close();
  if (first == '{') return read_report_json(path);
  return read_report_csv(path);
}

}  // namespace pocus
