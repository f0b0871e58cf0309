#include "mcg/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mcg/rng.hpp"

namespace fs = std::filesystem;

namespace mcg {

namespace {

// Segment k covers [floor(k*F/n), floor((k+1)*F/n)).
std::pair<int64_t, int64_t> segment_bounds(int64_t frame_count, int n, int k) {
  const int64_t lo = frame_count * k / n;
  const int64_t hi = frame_count * (k + 1) / n;
  return {lo, hi};
}

uint32_t read_u32le(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void write_u32le(std::ostream& out, uint32_t v) {
  const uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<uint8_t> read_ppm(const std::string& path, int& h, int& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("decode failure: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") fail("decode failure: unsupported image format in " + path);
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v = -1;
    in >> v;
    if (v < 0) fail("decode failure: bad header in " + path);
    return v;
  };
  w = next_int();
  h = next_int();
  const int maxval = next_int();
  if (maxval != 255) fail("decode failure: unsupported maxval in " + path);
  in.get();  // single whitespace after header
  std::vector<uint8_t> data(size_t(h) * w * 3);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
  if (!in) fail("decode failure: truncated image " + path);
  return data;
}

}  // namespace

FrameIndexPlan head_tail_sample(const VideoMeta& meta, int n, SampleMode mode, uint64_t seed,
                                const SamplingConfig& cfg) {
  if (n < 2) fail("head_tail_sample requires n >= 2");
  if (meta.frame_count < 1) fail("head_tail_sample requires at least one frame");

  FrameIndexPlan plan;
  plan.mode = mode;
  plan.seed = seed;

  if (meta.frame_count < n) {
    if (!cfg.allow_repeat) fail("insufficient frames: " + std::to_string(meta.frame_count) +
                                " < " + std::to_string(n) + " (" + meta.source_id + ")");
    for (int i = 0; i < n; ++i) plan.indices.push_back(i % meta.frame_count);
    std::sort(plan.indices.begin(), plan.indices.end());
    return plan;
  }

  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const auto [lo, hi] = segment_bounds(meta.frame_count, n, k);
    const int64_t len = hi - lo;
    if (mode == SampleMode::kEval) {
      plan.indices.push_back(k % 2 == 0 ? lo : hi - 1);
      continue;
    }
    const int64_t edge = int64_t(std::ceil(cfg.edge_fraction * double(len)));
    // Union of head [lo, lo+edge) and tail [hi-edge, hi); overlapping
    // regions collapse so each frame is drawn at most once per segment.
    std::vector<int64_t> region;
    for (int64_t f = lo; f < std::min(lo + edge, hi); ++f) region.push_back(f);
    for (int64_t f = std::max(hi - edge, lo + edge); f < hi; ++f) region.push_back(f);
    plan.indices.push_back(region[rng.below(region.size())]);
  }
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

MediaSource MediaSource::open(const std::string& path) {
  MediaSource src;
  src.meta_.source_id = path;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext == ".ppm") src.image_paths_.push_back(entry.path().string());
    }
    if (src.image_paths_.empty()) fail("decode failure: no frames in directory " + path);
    std::sort(src.image_paths_.begin(), src.image_paths_.end());
    src.meta_.frame_count = int64_t(src.image_paths_.size());
    int h = 0, w = 0;
    read_ppm(src.image_paths_[0], h, w);
    src.height_ = h;
    src.width_ = w;
    return src;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("decode failure: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MCGV")
    fail("decode failure: bad magic in " + path);
  src.meta_.frame_count = read_u32le(in);
  src.height_ = int(read_u32le(in));
  src.width_ = int(read_u32le(in));
  if (!in || src.meta_.frame_count < 1 || src.height_ < 1 || src.width_ < 1)
    fail("decode failure: bad header in " + path);
  const auto need = 16 + uint64_t(src.meta_.frame_count) * src.height_ * src.width_ * 3;
  if (fs::file_size(path) < need) fail("decode failure: truncated frame stack " + path);
  src.stack_path_ = path;
  return src;
}

std::vector<uint8_t> MediaSource::frame(int64_t index) const {
  if (index < 0 || index >= meta_.frame_count)
    fail("plan/source mismatch: frame " + std::to_string(index) + " of " +
         std::to_string(meta_.frame_count) + " (" + meta_.source_id + ")");
  const size_t frame_bytes = size_t(height_) * width_ * 3;
  if (!stack_path_.empty()) {
    std::ifstream in(stack_path_, std::ios::binary);
    if (!in) fail("decode failure: cannot open " + stack_path_);
    in.seekg(std::streamoff(16 + uint64_t(index) * frame_bytes));
    std::vector<uint8_t> data(frame_bytes);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(frame_bytes));
    if (!in) fail("decode failure: truncated frame stack " + stack_path_);
    return data;
  }
  int h = 0, w = 0;
  auto data = read_ppm(image_paths_[size_t(index)], h, w);
  if (h != height_ || w != width_)
    fail("decode failure: inconsistent frame size in " + meta_.source_id);
  return data;
}

VideoClip decode_frames(const MediaSource& source, const FrameIndexPlan& plan) {
  VideoClip clip;
  clip.height = source.height();
  clip.width = source.width();
  clip.plan = plan;
  clip.frames.reserve(plan.indices.size());
  for (int64_t idx : plan.indices) clip.frames.push_back(source.frame(idx));
  return clip;
}

NormalizedClip resize_normalize(const VideoClip& clip, int resolution,
                                const std::array<double, 3>& mean,
                                const std::array<double, 3>& std_dev) {
  if (resolution < 1) fail("resize_normalize: bad resolution");
  NormalizedClip out;
  out.resolution = resolution;
  out.mean = mean;
  out.std_dev = std_dev;
  const int h = clip.height, w = clip.width;
  const double sy = double(h) / resolution;
  const double sx = double(w) / resolution;
  for (const auto& raw : clip.frames) {
    Tensor f(resolution * resolution, 3);
    for (int y = 0; y < resolution; ++y) {
      // Pixel-center alignment: destination center maps to source center.
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::min(std::max(fy, 0.0), double(h - 1));
      const int y0 = int(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < resolution; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::min(std::max(fx, 0.0), double(w - 1));
        const int x0 = int(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        for (int c = 0; c < 3; ++c) {
          auto px = [&](int yy, int xx) { return double(raw[(size_t(yy) * w + xx) * 3 + c]); };
          const double top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
          const double bot = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
          const double v = (top * (1 - wy) + bot * wy) / 255.0;
          f(y * resolution + x, c) = (v - mean[c]) / std_dev[c];
        }
      }
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

void write_frame_stack(const std::string& path, const std::vector<std::vector<uint8_t>>& frames,
                       int height, int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out.write("MCGV", 4);
  write_u32le(out, uint32_t(frames.size()));
  write_u32le(out, uint32_t(height));
  write_u32le(out, uint32_t(width));
  for (const auto& f : frames) {
    if (int(f.size()) != height * width * 3) fail("frame size mismatch while writing " + path);
    out.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size()));
  }
  if (!out) fail("write failure: " + path);
}

}  // namespace mcg
