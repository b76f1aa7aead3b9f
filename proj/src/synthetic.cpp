#include "pocus/synthetic.hpp"

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "pocus/csv.hpp"
#include "pocus/errors.hpp"
#include "pocus/rng.hpp"

namespace pocus {

namespace {

std::string seq_id(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, n);
  return buf;
}

cv::Mat speckle_field(int side, int base, int spread, Rng& rng) {
  cv::Mat field(side, side, CV_8UC3);
  for (int y = 0; y < side; ++y) {
    auto* row = field.ptr<cv::Vec3b>(y);
    for (int x = 0; x < side; ++x) {
      auto v = static_cast<std::uint8_t>(base + static_cast<int>(rng.below(static_cast<std::uint64_t>(spread))));
      row[x] = cv::Vec3b(v, v, v);
    }
  }
  return field;
}

void write_video(const std::string& path, int side, int frames, bool positive, Rng rng) {
  cv::VideoWriter writer(path, cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), 20.0,
                         cv::Size(side, side), true);
  if (!writer.isOpened()) throw RuntimeFailure("cannot open video writer for " + path);

  // One static speckle field per video; positives add a moving bright blob
  // over a brighter base so the two classes separate on simple statistics.
  cv::Mat field = speckle_field(side, positive ? 90 : 20, 50, rng);
  double phase = rng.uniform(0.0, 6.28318530717958648);
  int radius = side / 5;
  double amp = side * 0.28;

  for (int t = 0; t < frames; ++t) {
    cv::Mat frame = field.clone();
    if (positive) {
      double a = phase + 0.35 * t;
      int cx = static_cast<int>(std::lround(side / 2.0 + amp * std::sin(a)));
      int cy = static_cast<int>(std::lround(side / 2.0 + amp * std::cos(0.7 * a)));
      cv::circle(frame, {cx, cy}, radius, cv::Scalar(235, 235, 235), cv::FILLED, cv::LINE_AA);
    }
    writer.write(frame);
  }
  writer.release();
}

}  // namespace

void SyntheticSpec::validate() const {
  for (int v : {train_pos, train_neg, val_pos, val_neg, test_pos, test_neg, decoys})
    if (v < 0) throw UsageError("synthetic counts must be nonnegative");
  if (train_pos + train_neg + val_pos + val_neg + test_pos + test_neg < 1)
    throw UsageError("synthetic corpus needs at least one video");
  if (side < 16) throw UsageError("synthetic side must be at least 16");
  if (min_frames < 1 || min_frames > max_frames)
    throw UsageError("synthetic frame range is invalid");
}

std::string generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::filesystem::path root(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(root / "videos", ec);
  if (ec) throw RuntimeFailure("cannot create directory " + (root / "videos").string());

  CsvTable manifest;
  manifest.header = {"id", "filename", "class", "probe", "split"};

  struct Group {
    const char* prefix;
    bool positive;
    int train, val, test;
  };
  for (const Group& g : {Group{"pos", true, spec.train_pos, spec.val_pos, spec.test_pos},
                         Group{"neg", false, spec.train_neg, spec.val_neg, spec.test_neg}}) {
    int total = g.train + g.val + g.test;
    for (int i = 0; i < total; ++i) {
      std::string id = seq_id(g.prefix, i + 1);
      std::string rel = "videos/" + id + ".avi";
      Rng rng = Rng::derived(spec.seed, "synthetic/" + id);
      int frames = spec.min_frames +
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_frames - spec.min_frames + 1)));
      write_video((root / rel).string(), spec.side, frames, g.positive, std::move(rng));
      std::string split = i < g.train ? "train" : i < g.train + g.val ? "val" : "test";
      std::string cls = g.positive ? "COVID-19" : (i % 2 == 0 ? "normal" : "pneumonia");
      manifest.rows.push_back({id, rel, cls, "convex", split});
    }
  }

  for (int i = 0; i < spec.decoys; ++i) {
    std::string id = seq_id("decoy", i + 1);
    std::string rel = "videos/" + id + ".avi";
    Rng rng = Rng::derived(spec.seed, "synthetic/" + id);
    write_video((root / rel).string(), spec.side, 10, false, std::move(rng));
    // Alternate between the two exclusion reasons: the discarded class and a
    // non-convex probe.
    if (i % 2 == 0)
      manifest.rows.push_back({id, rel, "other", "convex", ""});
    else
      manifest.rows.push_back({id, rel, "normal", "linear", ""});
  }

  std::string manifest_path = (root / "manifest.csv").string();
  write_csv(manifest_path, manifest);
  return manifest_path;
}

}  // namespace pocus
