#ifndef POCUS_PREPROCESS_HPP
#define POCUS_PREPROCESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pocus {

// One decoded frame: 8-bit, row-major, height x width x channels.
// Channel order is RGB for 3-channel frames; 1-channel frames are grayscale.
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

struct CropRect {
  int x = 0, y = 0, w = 0, h = 0;
};

struct PreprocessConfig {
  int max_frames = 60;
  // Square model input side in pixels; 0 means "use the backbone's
  // canonical input side" and is resolved before preprocessing runs.
  int frame_side = 0;
  std::optional<CropRect> crop;
  int frame_stride = 1;

  void validate() const;
  PreprocessConfig resolved(int backbone_side) const;
};

// Truncated/resized 8-bit frames for one video, before normalization.
// Only the real frames are held; padding is implied by max_frames.
struct RawClip {
  int max_frames = 0;
  int side = 0;
  int channels = 0;  // 1 or 3, as decoded
  int true_length = 0;
  std::string source_id;
  std::vector<std::uint8_t> pixels;  // true_length * side * side * channels

  std::size_t frame_bytes() const { return static_cast<std::size_t>(side) * side * channels; }
};

// Fixed-length frame stack for one video. frames holds t*h*w*c floats in
// [-1, 1]; time steps past true_length are all-zero padding with mask 0.
struct Clip {
  int t = 0, h = 0, w = 0, c = 0;
  std::vector<float> frames;
  std::vector<std::uint8_t> mask;
  std::string source_id;
  int true_length = 0;

  std::size_t frame_size() const { return static_cast<std::size_t>(h) * w * c; }
  float* frame(int i) { return frames.data() + frame_size() * i; }
  const float* frame(int i) const { return frames.data() + frame_size() * i; }
};

// Crops (optionally) and resizes the decoded frames to cfg.frame_side.
RawClip assemble_clip(const std::vector<Frame>& raw_frames, const PreprocessConfig& cfg,
                      const std::string& source_id);

// Coerces to 3 channels, maps 8-bit values to [-1, 1] (the backbone input
// range), and zero-pads to max_frames time steps.
Clip normalize_clip(const RawClip& raw);

// assemble_clip + normalize_clip in one step.
Clip to_clip(const std::vector<Frame>& raw_frames, const PreprocessConfig& cfg,
             const std::string& source_id);

// Decodes a video, taking every frame_stride-th frame from the start until
// end-of-video or until cfg.max_frames frames have been collected.
std::vector<Frame> extract_frames(const std::string& video_path, const PreprocessConfig& cfg);

// Identity of the preprocessing configuration; clips in the store are only
// reused when this hash matches.
std::uint64_t preprocess_hash(const PreprocessConfig& cfg);

// Clip store: one self-describing binary file per video id holding the 8-bit
// real frames; padding is reconstructed on load. See docs/formats.md.
void write_clip(const std::string& path, const RawClip& raw, std::uint64_t config_hash);
struct StoredClip {
  RawClip raw;
  std::uint64_t config_hash = 0;
};
StoredClip read_clip(const std::string& path);

}  // namespace pocus

#endif  // POCUS_PREPROCESS_HPP
