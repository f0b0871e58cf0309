#pragma once

#include "mcg/nn.hpp"
#include "mcg/sampling.hpp"

namespace mcg {

/// Flattened non-overlapping patches: one row per (frame, patch), frame
/// major, each row the patch pixels in row-major order with channels
/// innermost (length 3*P*P).
struct PatchGrid {
  Tensor rows;
  int frames = 0;
  int patches_per_frame = 0;  // (H/P)^2
  int grid_side = 0;          // H/P
  int patch = 0;
};

PatchGrid patchify(const NormalizedClip& clip, int patch);
/// Exact inverse of patchify (used by the bijection tests).
NormalizedClip unpatchify(const PatchGrid& grid);

struct VideoEncoderConfig {
  int dim = 32;
  int depth = 2;
  int heads = 4;
  int patch = 8;
  int max_frames = 16;
  int max_patches = 64;  // per frame
  /// false (default): block output = FFN(spatial cue) + temporal cue, the
  /// literal summation; true: conventional residual chain.
  bool timesformer_residuals = false;
};

/// The Intra-Video Module: patch embedding plus stacked divided
/// space-time attention blocks. Output row 0 is the video summary x_cls.
class VideoEncoder {
 public:
  VideoEncoder(ParameterTree& tree, const std::string& prefix, const VideoEncoderConfig& cfg,
               Rng& rng);

  Var embed_patches(const PatchGrid& grid) const;
  /// Temporal stage alone: per-patch-position attention across frames
  /// (residual included). Exposed for the locality tests.
  Var temporal_stage(const Var& tokens, int block, int frames, int patches) const;
  /// Spatial stage alone: within-frame attention over the temporal cue.
  Var spatial_stage(const Var& tokens, int block, int frames, int patches) const;
  Var divided_attention_block(const Var& tokens, int block, int frames, int patches) const;
  Var encode(const NormalizedClip& clip) const;

  const VideoEncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln_temporal, ln_spatial, ln_ffn;
    AttentionBlock temporal, spatial;
    FeedForward ffn;
  };
  VideoEncoderConfig cfg_;
  Var patch_proj_;   // [3P^2 x d]
  Var patch_bias_;   // [1 x d]
  Var cls_embed_;    // [1 x d]
  Var spatial_pos_;  // [max_patches x d]
  Var temporal_pos_; // [max_frames x d]
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

/// Masks for the divided attention stages over [cls, f0p0, f0p1, ...].
Tensor temporal_attention_mask(int frames, int patches);
Tensor spatial_attention_mask(int frames, int patches);

}  // namespace mcg
