#include "pocus/preprocess.hpp"

#include <opencv2/imgproc.hpp>

#include <cstring>

#include "pocus/binio.hpp"
#include "pocus/errors.hpp"
#include "pocus/rng.hpp"

namespace pocus {

namespace {
constexpr std::uint32_t kClipMagic = 0x50434c50;  // "PCLP"
constexpr std::uint32_t kClipVersion = 1;
}  // namespace

void PreprocessConfig::validate() const {
  if (max_frames < 1) throw UsageError("max_frames must be >= 1");
  if (frame_stride < 1) throw UsageError("frame_stride must be >= 1");
  if (frame_side < 0) throw UsageError("frame_side must be positive (or 0 for the backbone default)");
  if (crop && (crop->w <= 0 || crop->h <= 0 || crop->x < 0 || crop->y < 0))
    throw UsageError("crop rectangle must have positive size and nonnegative origin");
}

PreprocessConfig PreprocessConfig::resolved(int backbone_side) const {
  PreprocessConfig out = *this;
  if (out.frame_side == 0) out.frame_side = backbone_side;
  out.validate();
  return out;
}

RawClip assemble_clip(const std::vector<Frame>& raw_frames, const PreprocessConfig& cfg,
                      const std::string& source_id) {
  cfg.validate();
  if (cfg.frame_side == 0) throw UsageError("assemble_clip needs a resolved frame_side");
  if (raw_frames.empty()) throw DataError("cannot build a clip from zero frames (" + source_id + ")");
  if (static_cast<int>(raw_frames.size()) > cfg.max_frames)
    throw DataError("got " + std::to_string(raw_frames.size()) + " frames but max_frames is " +
                    std::to_string(cfg.max_frames) + " (" + source_id + ")");

  const int side = cfg.frame_side;
  int channels = raw_frames[0].channels;
  for (const Frame& f : raw_frames)
    if (f.channels == 3) channels = 3;  // promote all if any frame is color

  RawClip raw;
  raw.max_frames = cfg.max_frames;
  raw.side = side;
  raw.channels = channels;
  raw.source_id = source_id;
  raw.true_length = static_cast<int>(raw_frames.size());
  raw.pixels.assign(static_cast<std::size_t>(raw.true_length) * raw.frame_bytes(), 0);

  for (int i = 0; i < raw.true_length; ++i) {
    const Frame& f = raw_frames[static_cast<std::size_t>(i)];
    if (f.height <= 0 || f.width <= 0 || (f.channels != 1 && f.channels != 3))
      throw DataError("frame " + std::to_string(i) + " of " + source_id + " has unsupported shape");
    int type = f.channels == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat src(f.height, f.width, type, const_cast<std::uint8_t*>(f.pixels.data()));
    if (f.channels == 1 && channels == 3) {
      cv::Mat color;
      cv::cvtColor(src, color, cv::COLOR_GRAY2RGB);
      src = color;
    }

    if (cfg.crop) {
      const CropRect& cr = *cfg.crop;
      if (cr.x + cr.w > f.width || cr.y + cr.h > f.height)
        throw DataError("crop rectangle exceeds frame bounds for " + source_id);
      src = src(cv::Rect(cr.x, cr.y, cr.w, cr.h));
    }

    cv::Mat resized;
    int interp = (src.cols > side || src.rows > side) ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(src, resized, cv::Size(side, side), 0, 0, interp);

    std::uint8_t* dst = raw.pixels.data() + raw.frame_bytes() * static_cast<std::size_t>(i);
    for (int y = 0; y < side; ++y)
      std::memcpy(dst + static_cast<std::size_t>(y) * side * channels, resized.ptr<std::uint8_t>(y),
                  static_cast<std::size_t>(side) * channels);
  }
  return raw;
}

Clip normalize_clip(const RawClip& raw) {
  if (raw.side <= 0 || raw.max_frames <= 0 || (raw.channels != 1 && raw.channels != 3))
    throw DataError("malformed clip for " + raw.source_id);
  if (raw.true_length < 1 || raw.true_length > raw.max_frames)
    throw DataError("malformed clip for " + raw.source_id);
  if (raw.pixels.size() != static_cast<std::size_t>(raw.true_length) * raw.frame_bytes())
    throw DataError("malformed clip for " + raw.source_id);

  Clip clip;
  clip.t = raw.max_frames;
  clip.h = raw.side;
  clip.w = raw.side;
  clip.c = 3;
  clip.source_id = raw.source_id;
  clip.true_length = raw.true_length;
  clip.frames.assign(static_cast<std::size_t>(clip.t) * clip.frame_size(), 0.0f);
  clip.mask.assign(static_cast<std::size_t>(clip.t), 0);

  std::size_t n = static_cast<std::size_t>(raw.side) * raw.side;
  for (int i = 0; i < raw.true_length; ++i) {
    const std::uint8_t* src = raw.pixels.data() + raw.frame_bytes() * static_cast<std::size_t>(i);
    float* dst = clip.frame(i);
    for (std::size_t p = 0; p < n; ++p) {
      for (int ch = 0; ch < 3; ++ch) {
        std::uint8_t v = raw.channels == 1 ? src[p] : src[p * 3 + static_cast<std::size_t>(ch)];
        dst[p * 3 + static_cast<std::size_t>(ch)] = static_cast<float>(v) / 127.5f - 1.0f;
      }
    }
    clip.mask[static_cast<std::size_t>(i)] = 1;
  }
  return clip;
}

Clip to_clip(const std::vector<Frame>& raw_frames, const PreprocessConfig& cfg,
             const std::string& source_id) {
  return normalize_clip(assemble_clip(raw_frames, cfg, source_id));
}

std::uint64_t preprocess_hash(const PreprocessConfig& cfg) {
  std::uint64_t h = fnv1a64("preprocess/v1");
  auto mix = [&h](std::int64_t v) { h = fnv1a64(&v, sizeof(v), h); };
  mix(cfg.max_frames);
  mix(cfg.frame_side);
  mix(cfg.frame_stride);
  mix(cfg.crop ? 1 : 0);
  if (cfg.crop) {
    mix(cfg.crop->x);
    mix(cfg.crop->y);
    mix(cfg.crop->w);
    mix(cfg.crop->h);
  }
  return h;
}

void write_clip(const std::string& path, const RawClip& raw, std::uint64_t config_hash) {
  BinaryWriter w(path);
  w.u32(kClipMagic);
  w.u32(kClipVersion);
  w.u64(config_hash);
  w.str(raw.source_id);
  w.u32(static_cast<std::uint32_t>(raw.max_frames));
  w.u32(static_cast<std::uint32_t>(raw.side));
  w.u32(static_cast<std::uint32_t>(raw.channels));
  w.u32(static_cast<std::uint32_t>(raw.true_length));
  w.bytes(raw.pixels.data(), raw.pixels.size());
  w.close();
}

StoredClip read_clip(const std::string& path) {
  BinaryReader r(path);
  if (r.u32() != kClipMagic) throw DataError("not a clip file: " + path);
  if (r.u32() != kClipVersion) throw DataError("unsupported clip version in " + path);
  StoredClip out;
  out.config_hash = r.u64();
  out.raw.source_id = r.str();
  out.raw.max_frames = static_cast<int>(r.u32());
  out.raw.side = static_cast<int>(r.u32());
  out.raw.channels = static_cast<int>(r.u32());
  out.raw.true_length = static_cast<int>(r.u32());
  if (out.raw.max_frames <= 0 || out.raw.side <= 0 ||
      (out.raw.channels != 1 && out.raw.channels != 3) || out.raw.true_length < 1 ||
      out.raw.true_length > out.raw.max_frames)
    throw DataError("corrupt clip header in " + path);
  out.raw.pixels.resize(static_cast<std::size_t>(out.raw.true_length) * out.raw.frame_bytes());
  r.bytes(out.raw.pixels.data(), out.raw.pixels.size());
  return out;
}

}  // namespace pocus
