#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <cstring>

#include "pocus/errors.hpp"
#include "pocus/preprocess.hpp"

namespace pocus {

std::vector<Frame> extract_frames(const std::string& video_path, const PreprocessConfig& cfg) {
  cfg.validate();
  cv::VideoCapture cap(video_path);
  if (!cap.isOpened()) throw DataError("cannot decode video: " + video_path);

  std::vector<Frame> frames;
  cv::Mat bgr;
  long index = 0;
  while (static_cast<int>(frames.size()) < cfg.max_frames && cap.read(bgr)) {
    bool keep = index % cfg.frame_stride == 0;
    ++index;
    if (!keep) continue;

    cv::Mat rgb;
    if (bgr.channels() == 3) {
      cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    } else if (bgr.channels() == 1) {
      rgb = bgr;
    } else {
      cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
    }

    Frame f;
    f.height = rgb.rows;
    f.width = rgb.cols;
    f.channels = rgb.channels();
    f.pixels.resize(static_cast<std::size_t>(f.height) * f.width * f.channels);
    if (rgb.isContinuous()) {
      std::memcpy(f.pixels.data(), rgb.data, f.pixels.size());
    } else {
      for (int y = 0; y < rgb.rows; ++y)
        std::memcpy(f.pixels.data() + static_cast<std::size_t>(y) * f.width * f.channels,
                    rgb.ptr(y), static_cast<std::size_t>(f.width) * f.channels);
    }
    frames.push_back(std::move(f));
  }

  if (frames.empty()) throw DataError("no decodable frames in video: " + video_path);
  return frames;
}

}  // namespace pocus
