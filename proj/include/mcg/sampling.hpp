#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg {

struct VideoMeta {
  int64_t frame_count = 0;
  double frames_per_second = 25.0;
  std::string source_id;
};

enum class SampleMode { kTrain, kEval };

struct FrameIndexPlan {
  std::vector<int64_t> indices;  // strictly increasing when frames suffice
  SampleMode mode = SampleMode::kEval;
  uint64_t seed = 0;             // train mode only
};

struct SamplingConfig {
  double edge_fraction = 0.3;  // head/tail share of each segment
  bool allow_repeat = false;
};

/// Splits the video into n equal contiguous segments and picks one frame
/// per segment. Train mode draws uniformly from the union of the
/// segment's head region (first ceil(edge_fraction*L) frames) and tail
/// region (last ceil(edge_fraction*L)); eval mode alternates
/// head-first / tail-last deterministically.
FrameIndexPlan head_tail_sample(const VideoMeta& meta, int n, SampleMode mode, uint64_t seed,
                                const SamplingConfig& cfg = {});

/// An opened media handle: either a raw frame-stack file or a directory
/// of PPM images in lexicographic frame order.
class MediaSource {
 public:
  static MediaSource open(const std::string& path);
  const VideoMeta& meta() const { return meta_; }
  int height() const { return height_; }
  int width() const { return width_; }
  /// Raw RGB bytes of one frame (row-major, 3 channels interleaved).
  std::vector<uint8_t> frame(int64_t index) const;

 private:
  VideoMeta meta_;
  int height_ = 0;
  int width_ = 0;
  std::string stack_path_;               // frame-stack file, or
  std::vector<std::string> image_paths_; // one image per frame
};

struct VideoClip {
  // [n_frames][h*w*3] 8-bit intensities.
  std::vector<std::vector<uint8_t>> frames;
  int height = 0;
  int width = 0;
  FrameIndexPlan plan;
};

VideoClip decode_frames(const MediaSource& source, const FrameIndexPlan& plan);

struct NormalizedClip {
  std::vector<Tensor> frames;  // per frame: [h*w x 3] real values
  int resolution = 0;
  std::array<double, 3> mean{};
  std::array<double, 3> std_dev{};
};

/// Bilinear resize to resolution x resolution (pixel-center alignment),
/// then per-channel standardization (x - mean) / std on [0,1] intensities.
NormalizedClip resize_normalize(const VideoClip& clip, int resolution,
                                const std::array<double, 3>& mean,
                                const std::array<double, 3>& std_dev);

/// Writer for the raw frame-stack format: 16-byte header (magic "MCGV",
/// u32 frame_count, u32 height, u32 width, little-endian) followed by
/// frame_count*h*w*3 bytes of RGB.
void write_frame_stack(const std::string& path, const std::vector<std::vector<uint8_t>>& frames,
                       int height, int width);

}  // namespace mcg
