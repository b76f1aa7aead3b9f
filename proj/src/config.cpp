#include "pocus/config.hpp"

#include <fstream>

#include "json.hpp"

#include "pocus/errors.hpp"

namespace pocus {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw UsageError("config: unknown key '" + where + key + "'");
  }
}

template <typename T>
void get_field(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: field '" + where + key + "' has the wrong type");
  }
}

OriginalClass class_from_name(const std::string& name) {
  if (name == "covid") return OriginalClass::kCovid;
  if (name == "non_covid_infection") return OriginalClass::kNonCovidInfection;
  if (name == "other") return OriginalClass::kOther;
  if (name == "normal") return OriginalClass::kNormal;
  throw UsageError("config: unknown class name '" + name +
                   "' (expected covid/non_covid_infection/other/normal)");
}

Probe probe_from_name(const std::string& name) {
  if (name == "convex") return Probe::kConvex;
  if (name == "linear") return Probe::kLinear;
  if (name == "unknown") return Probe::kUnknown;
  throw UsageError("config: unknown probe name '" + name + "' (expected convex/linear/unknown)");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);  // allow comments
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");

  RunConfig cfg;
  check_keys(j, "", {"paths", "dataset", "preprocess", "model", "backbone", "train"});

  if (j.contains("paths")) {
    const json& p = j["paths"];
    check_keys(p, "paths.", {"manifest", "video_root", "work_dir"});
    get_field(p, "paths.", "manifest", cfg.manifest_path);
    get_field(p, "paths.", "video_root", cfg.video_root);
    get_field(p, "paths.", "work_dir", cfg.work_dir);
  }

  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d, "dataset.",
               {"train_pos", "train_neg", "val_pos", "val_neg", "test_pos", "test_neg", "seed",
                "schema_name", "class_map", "probe_map"});
    for (const char* k : {"train_pos", "train_neg", "val_pos", "val_neg", "test_pos", "test_neg"})
      if (d.contains(k)) cfg.split_counts_from_config = true;
    get_field(d, "dataset.", "train_pos", cfg.split.train_pos);
    get_field(d, "dataset.", "train_neg", cfg.split.train_neg);
    get_field(d, "dataset.", "val_pos", cfg.split.val_pos);
    get_field(d, "dataset.", "val_neg", cfg.split.val_neg);
    get_field(d, "dataset.", "test_pos", cfg.split.test_pos);
    get_field(d, "dataset.", "test_neg", cfg.split.test_neg);
    get_field(d, "dataset.", "seed", cfg.split.seed);
    get_field(d, "dataset.", "schema_name", cfg.schema.name);
    if (d.contains("class_map")) {
      std::map<std::string, std::string> raw;
      get_field(d, "dataset.", "class_map", raw);
      cfg.schema.class_map.clear();
      for (const auto& [token, name] : raw) cfg.schema.class_map[token] = class_from_name(name);
    }
    if (d.contains("probe_map")) {
      std::map<std::string, std::string> raw;
      get_field(d, "dataset.", "probe_map", raw);
      cfg.schema.probe_map.clear();
      for (const auto& [token, name] : raw) cfg.schema.probe_map[token] = probe_from_name(name);
    }
  }

  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    check_keys(p, "preprocess.", {"max_frames", "frame_side", "frame_stride", "crop"});
    get_field(p, "preprocess.", "max_frames", cfg.preprocess.max_frames);
    get_field(p, "preprocess.", "frame_side", cfg.preprocess.frame_side);
    get_field(p, "preprocess.", "frame_stride", cfg.preprocess.frame_stride);
    if (p.contains("crop")) {
      const json& c = p["crop"];
      check_keys(c, "preprocess.crop.", {"x", "y", "w", "h"});
      CropRect crop;
      get_field(c, "preprocess.crop.", "x", crop.x);
      get_field(c, "preprocess.crop.", "y", crop.y);
      get_field(c, "preprocess.crop.", "w", crop.w);
      get_field(c, "preprocess.crop.", "h", crop.h);
      cfg.preprocess.crop = crop;
    }
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model.",
               {"recurrent_layers", "dropout_rate", "classification_threshold", "backbone_trainable"});
    get_field(m, "model.", "recurrent_layers", cfg.model.recurrent_layers);
    get_field(m, "model.", "dropout_rate", cfg.model.dropout_rate);
    get_field(m, "model.", "classification_threshold", cfg.model.classification_threshold);
    get_field(m, "model.", "backbone_trainable", cfg.model.backbone_trainable);
  }

  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    check_keys(b, "backbone.", {"id", "seed", "weights_path"});
    get_field(b, "backbone.", "id", cfg.backbone.id);
    get_field(b, "backbone.", "seed", cfg.backbone.seed);
    get_field(b, "backbone.", "weights_path", cfg.backbone.weights_path);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train.",
               {"initial_lr", "max_epochs", "lr_decay_factor", "lr_patience", "early_stop_patience",
                "monitor", "min_delta", "batch_size", "seed"});
    get_field(t, "train.", "initial_lr", cfg.train.initial_lr);
    get_field(t, "train.", "max_epochs", cfg.train.max_epochs);
    get_field(t, "train.", "lr_decay_factor", cfg.train.lr_decay_factor);
    get_field(t, "train.", "lr_patience", cfg.train.lr_patience);
    get_field(t, "train.", "early_stop_patience", cfg.train.early_stop_patience);
    if (t.contains("monitor")) {
      std::string name;
      get_field(t, "train.", "monitor", name);
      cfg.train.monitor = monitor_from_string(name);
    }
    get_field(t, "train.", "min_delta", cfg.train.min_delta);
    get_field(t, "train.", "batch_size", cfg.train.batch_size);
    get_field(t, "train.", "seed", cfg.train.seed);
  }

  return cfg;
}

}  // namespace pocus
