#include "pocus/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "json.hpp"

#include "pocus/backbone.hpp"
#include "pocus/binio.hpp"
#include "pocus/csv.hpp"
#include "pocus/errors.hpp"
#include "pocus/evaluation.hpp"
#include "pocus/plot.hpp"
#include "pocus/synthetic.hpp"
#include "pocus/trainer.hpp"

namespace pocus {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& base, const std::string& leaf) {
  return (fs::path(base) / leaf).string();
}

// Base directory for relative video paths in the manifest.
std::string video_base(const RunConfig& cfg) {
  if (!cfg.video_root.empty()) return cfg.video_root;
  fs::path parent = fs::path(cfg.manifest_path).parent_path();
  return parent.empty() ? "." : parent.string();
}

std::string resolve_video_path(const RunConfig& cfg, const std::string& filename) {
  fs::path p(filename);
  if (p.is_absolute()) return filename;
  return (fs::path(video_base(cfg)) / p).string();
}

// Config hash of an existing clip file, or nothing if it is unreadable.
std::optional<std::uint64_t> stored_clip_hash(const std::string& path) {
  try {
    BinaryReader r(path);
    if (r.u32() != 0x50434c50 || r.u32() != 1) return std::nullopt;
    return r.u64();
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::set<std::string> read_exclusions(const std::string& path) {
  std::set<std::string> out;
  if (!fs::exists(path)) return out;
  CsvTable t = read_csv(path);
  int c_id = t.column("id");
  if (c_id < 0) throw DataError("exclusion report " + path + " is missing the id column");
  for (const auto& row : t.rows) out.insert(row[static_cast<std::size_t>(c_id)]);
  return out;
}

std::uint64_t feature_cache_key(const Backbone& backbone, const PreprocessConfig& pp) {
  std::uint64_t h = fnv1a64("features/v1");
  h = fnv1a64(backbone.id(), h);
  std::uint64_t wh = backbone.params_hash();
  h = fnv1a64(&wh, sizeof(wh), h);
  std::uint64_t ph = preprocess_hash(pp);
  h = fnv1a64(&ph, sizeof(ph), h);
  return h;
}

std::string hex16(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Per-split feature sequences for every non-excluded record, pulled from the
// feature cache or computed from the clip store and cached.
std::map<Split, std::vector<FeatureSequence>> build_features(const std::string& work_dir,
                                                             const std::vector<VideoRecord>& records,
                                                             const Backbone& backbone,
                                                             const PreprocessConfig& pp) {
  std::uint64_t clip_hash = preprocess_hash(pp);
  std::uint64_t cache_key = feature_cache_key(backbone, pp);
  std::string cache_dir = join(work_dir, join("features", hex16(cache_key)));
  fs::create_directories(cache_dir);

  std::set<std::string> excluded = read_exclusions(join(work_dir, "exclusions.csv"));
  int skipped = 0;

  std::map<Split, std::vector<FeatureSequence>> out;
  for (const auto& r : records) {
    if (!r.binary_label || !r.split) continue;
    if (excluded.count(r.id)) {
      ++skipped;
      continue;
    }
    std::string feat_path = join(cache_dir, r.id + ".feat");
    FeatureSequence seq;
    if (fs::exists(feat_path)) {
      seq = read_feature_sequence(feat_path, cache_key);
    } else {
      std::string clip_path = join(work_dir, join("clips", r.id + ".clip"));
      if (!fs::exists(clip_path))
        throw DataError("no clip for video '" + r.id + "' under " + work_dir +
                        "; run the prepare subcommand first");
      StoredClip stored = read_clip(clip_path);
      if (stored.config_hash != clip_hash)
        throw DataError("clip store under " + work_dir +
                        " was built with different preprocessing settings; rerun the prepare subcommand");
      seq = extract_features(normalize_clip(stored.raw), backbone);
      std::string tmp = feat_path + ".tmp";
      write_feature_sequence(tmp, seq, cache_key);
      fs::rename(tmp, feat_path);
    }
    seq.label = r.binary_label == BinaryLabel::kPositive ? 1 : 0;
    out[*r.split].push_back(std::move(seq));
  }
  if (skipped > 0)
    std::cerr << "warning: " << skipped << " video(s) listed in exclusions.csv were skipped\n";
  return out;
}

SequenceClassifier classifier_from_checkpoint(const Checkpoint& ck) {
  return SequenceClassifier(ck.model, ck.theta);
}

std::unique_ptr<Backbone> backbone_from_checkpoint(const Checkpoint& ck) {
  auto backbone = Backbone::create(ck.backbone);
  if (backbone->params_hash() != ck.backbone_params_hash)
    throw DataError("backbone weights do not match the checkpoint (is '" + ck.backbone.weights_path +
                    "' the file used at training time?)");
  return backbone;
}

Checkpoint load_checkpoint_checked(const std::string& path) {
  if (!fs::exists(path))
    throw DataError("checkpoint " + path + " not found; run the train subcommand first");
  return load_checkpoint(path);
}

void print_metric(const char* name, const std::optional<double>& v) {
  std::cout << "  " << name << ": " << (v ? format_percent(*v) + "%" : "absent (0/0)") << "\n";
}

std::string predict_one(const SequenceClassifier& model, const Backbone& backbone,
                        const PreprocessConfig& pp, const std::string& video_path,
                        double* probability) {
  std::vector<Frame> frames = extract_frames(video_path, pp);
  Clip clip = to_clip(frames, pp, fs::path(video_path).stem().string());
  FeatureSequence seq = extract_features(clip, backbone);
  double p = model.forward(seq);
  if (probability) *probability = p;
  return model.predict(p) ? "positive" : "negative";
}

}  // namespace

void cmd_prepare(RunConfig cfg, const PrepareOptions& opt) {
  fs::create_directories(cfg.work_dir);

  if (opt.synthetic) {
    SyntheticSpec ss;
    ss.train_pos = ss.train_neg = opt.synthetic_count;
    ss.decoys = opt.synthetic_decoys;
    ss.seed = cfg.split.seed;
    std::string dir = join(cfg.work_dir, "synthetic");
    cfg.manifest_path = generate_synthetic_corpus(ss, dir);
    cfg.video_root = dir;
    std::cout << "generated synthetic corpus at " << dir << "\n";
  }
  if (cfg.manifest_path.empty())
    throw UsageError("a manifest is required (pass --manifest, or --synthetic to generate one)");

  std::vector<VideoRecord> records = load_manifest(cfg.manifest_path, cfg.schema);
  std::vector<VideoRecord> labeled = filter_and_label(records);
  if (!opt.split_file.empty())
    apply_split_overrides(labeled, load_split_overrides(opt.split_file));

  // When the manifest pins splits and no counts were configured, accept the
  // explicit assignment as the split spec.
  bool any_explicit = std::any_of(labeled.begin(), labeled.end(),
                                  [](const VideoRecord& r) { return r.split.has_value(); });
  SplitSpec spec = cfg.split;
  if (any_explicit && !cfg.split_counts_from_config) {
    spec.train_pos = spec.train_neg = spec.val_pos = spec.val_neg = spec.test_pos = spec.test_neg = 0;
    for (const auto& r : labeled) {
      if (!r.split || !r.binary_label) continue;
      bool pos = r.binary_label == BinaryLabel::kPositive;
      switch (*r.split) {
        case Split::kTrain: (pos ? spec.train_pos : spec.train_neg)++; break;
        case Split::kVal: (pos ? spec.val_pos : spec.val_neg)++; break;
        case Split::kTest: (pos ? spec.test_pos : spec.test_neg)++; break;
      }
    }
  }
  std::vector<VideoRecord> resolved = make_splits(labeled, spec);

  int pos = 0;
  for (const auto& r : resolved)
    if (r.binary_label == BinaryLabel::kPositive) ++pos;
  std::cout << "eligible videos: " << resolved.size() << " (" << pos << " positive / "
            << resolved.size() - pos << " negative)\n";
  std::cout << "splits: train " << spec.train_pos + spec.train_neg << " (" << spec.train_pos << "/"
            << spec.train_neg << "), val " << spec.val_pos + spec.val_neg << " (" << spec.val_pos
            << "/" << spec.val_neg << "), test " << spec.test_pos + spec.test_neg << " ("
            << spec.test_pos << "/" << spec.test_neg << ")\n";

  write_resolved_manifest(join(cfg.work_dir, "resolved_manifest.csv"), resolved);

  PreprocessConfig pp = cfg.preprocess.resolved(Backbone::canonical_input_side(cfg.backbone.id));
  std::uint64_t clip_hash = preprocess_hash(pp);
  fs::create_directories(join(cfg.work_dir, "clips"));

  int written = 0, reused = 0;
  CsvTable exclusions;
  exclusions.header = {"id", "reason"};
  for (const auto& r : resolved) {
    std::string clip_path = join(cfg.work_dir, join("clips", r.id + ".clip"));
    if (stored_clip_hash(clip_path) == clip_hash) {
      ++reused;
      continue;
    }
    try {
      std::vector<Frame> frames = extract_frames(resolve_video_path(cfg, r.file_path), pp);
      RawClip raw = assemble_clip(frames, pp, r.id);
      std::string tmp = clip_path + ".tmp";
      write_clip(tmp, raw, clip_hash);
      fs::rename(tmp, clip_path);
      ++written;
    } catch (const DataError& e) {
      exclusions.rows.push_back({r.id, e.what()});
      std::cerr << "excluded " << r.id << ": " << e.what() << "\n";
    }
  }
  write_csv(join(cfg.work_dir, "exclusions.csv"), exclusions);

  std::cout << "clips: " << written << " written, " << reused << " reused, "
            << exclusions.rows.size() << " excluded\n";
}

void cmd_train(RunConfig cfg, const TrainOptions& opt) {
  std::string manifest = join(cfg.work_dir, "resolved_manifest.csv");
  if (!fs::exists(manifest))
    throw DataError("no resolved manifest at " + manifest + "; run the prepare subcommand first");
  std::vector<VideoRecord> records = load_resolved_manifest(manifest);

  auto backbone = Backbone::create(cfg.backbone);
  PreprocessConfig pp = cfg.preprocess.resolved(backbone->input_side());
  cfg.model.feature_dim = backbone->feature_dim();
  cfg.model.validate();

  auto sets = build_features(cfg.work_dir, records, *backbone, pp);
  SequenceClassifier model(cfg.model);

  TrainResult result = train(model, sets[Split::kTrain], sets[Split::kVal], cfg.train);
  for (const auto& row : result.history)
    std::printf("epoch %d/%d  train_loss %.4f  train_acc %.4f  val_loss %.4f  val_acc %.4f  lr %g\n",
                row.epoch, cfg.train.max_epochs, row.train_loss, row.train_acc, row.val_loss,
                row.val_acc, row.lr);

  std::string history_path = opt.history_out.empty() ? join(cfg.work_dir, "history.csv") : opt.history_out;
  write_history(history_path, result.history);

  Checkpoint ck;
  ck.model = model.config();
  ck.backbone = backbone->spec();
  ck.backbone_params_hash = backbone->params_hash();
  ck.preprocess = pp;
  ck.theta = model.params();
  std::string ckpt_path = opt.checkpoint_out.empty() ? join(cfg.work_dir, "best.ckpt") : opt.checkpoint_out;
  save_checkpoint(ckpt_path, ck);

  std::cout << "trained " << result.epochs_run << " epoch(s)"
            << (result.stopped_early ? " (stopped early)" : "") << "; best "
            << to_string(cfg.train.monitor) << " " << format_double(result.best_value)
            << " at epoch " << result.best_epoch << "\n";
  std::cout << "wrote " << ckpt_path << " and " << history_path << "\n";
}

void cmd_evaluate(const RunConfig& cfg, const EvaluateOptions& opt) {
  if (opt.split != "val" && opt.split != "test")
    throw UsageError("--split must be val or test, got '" + opt.split + "'");
  Split split = split_from_string(opt.split);

  std::string ckpt_path = opt.checkpoint.empty() ? join(cfg.work_dir, "best.ckpt") : opt.checkpoint;
  Checkpoint ck = load_checkpoint_checked(ckpt_path);
  auto backbone = backbone_from_checkpoint(ck);
  SequenceClassifier model = classifier_from_checkpoint(ck);

  std::string manifest = join(cfg.work_dir, "resolved_manifest.csv");
  if (!fs::exists(manifest))
    throw DataError("no resolved manifest at " + manifest + "; run the prepare subcommand first");
  std::vector<VideoRecord> records = load_resolved_manifest(manifest);

  auto sets = build_features(cfg.work_dir, records, *backbone, ck.preprocess);
  double threshold = opt.threshold.value_or(ck.model.classification_threshold);
  EvalReport report = evaluate(model, sets[split], threshold, opt.split);

  std::string out_dir = opt.out_dir.empty() ? join(cfg.work_dir, "reports") : opt.out_dir;
  fs::create_directories(out_dir);
  std::string json_path = join(out_dir, "report_" + opt.split + ".json");
  std::string csv_path = join(out_dir, "report_" + opt.split + ".csv");
  write_report(json_path, report, ReportFormat::kJson);
  write_report(csv_path, report, ReportFormat::kCsv);

  std::cout << opt.split << " videos: " << report.matrix.total() << " (threshold "
            << format_double(threshold) << ")\n";
  std::cout << "  confusion: tp " << report.matrix.tp << ", fp " << report.matrix.fp << ", fn "
            << report.matrix.fn << ", tn " << report.matrix.tn << "\n";
  std::cout << "  accuracy: " << format_percent(report.metrics.accuracy) << "%\n";
  print_metric("sensitivity (positive)", report.metrics.sensitivity_positive);
  print_metric("sensitivity (negative)", report.metrics.sensitivity_negative);
  print_metric("precision (positive)", report.metrics.precision_positive);
  print_metric("precision (negative)", report.metrics.precision_negative);
  std::cout << "wrote " << json_path << " and " << csv_path << "\n";
}

void cmd_predict(const PredictOptions& opt) {
  if (opt.video.empty()) throw UsageError("--video is required");
  Checkpoint ck = load_checkpoint_checked(opt.checkpoint);
  if (opt.threshold) ck.model.classification_threshold = *opt.threshold;
  auto backbone = backbone_from_checkpoint(ck);
  SequenceClassifier model = classifier_from_checkpoint(ck);

  nlohmann::json records = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();

  if (fs::is_directory(opt.video)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(opt.video)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".avi" || ext == ".mp4" || ext == ".mov" || ext == ".mkv" || ext == ".mpg" ||
          ext == ".mpeg" || ext == ".wmv")
        files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no video files found in " + opt.video);
    for (const auto& f : files) {
      try {
        double p = 0.0;
        std::string verdict = predict_one(model, *backbone, ck.preprocess, f, &p);
        std::printf("%s: %s p=%.3f\n", f.c_str(), verdict.c_str(), p);
        records.push_back({{"file", f},
                           {"probability", p},
                           {"predicted", verdict},
                           {"threshold", ck.model.classification_threshold}});
      } catch (const Error& e) {
        std::cerr << "failed " << f << ": " << e.what() << "\n";
        failures.push_back({{"file", f}, {"error", e.what()}});
      }
    }
    if (records.empty()) throw DataError("no video in " + opt.video + " could be scored");
  } else {
    double p = 0.0;
    std::string verdict = predict_one(model, *backbone, ck.preprocess, opt.video, &p);
    std::printf("%s p=%.3f\n", verdict.c_str(), p);
    records.push_back({{"file", opt.video},
                       {"probability", p},
                       {"predicted", verdict},
                       {"threshold", ck.model.classification_threshold}});
  }

  nlohmann::json doc = {{"predictions", records}, {"failures", failures}};
  if (opt.out.empty()) {
    std::cout << doc.dump() << "\n";
  } else {
    std::ofstream out(opt.out);
    if (!out) throw RuntimeFailure("cannot write " + opt.out);
    out << doc.dump(2) << "\n";
    std::cout << "wrote " << opt.out << "\n";
  }
}

void cmd_plot(const PlotOptions& opt) {
  if (opt.history.empty()) throw UsageError("--history is required");
  std::string out_dir = opt.out_dir.empty() ? "plots" : opt.out_dir;
  std::vector<std::string> written = plot_curves(opt.history, out_dir);
  for (const auto& f : written) std::cout << "wrote " << f << "\n";
}

}  // namespace pocus
