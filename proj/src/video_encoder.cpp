#include "mcg/video_encoder.hpp"

namespace mcg {

PatchGrid patchify(const NormalizedClip& clip, int patch) {
  if (clip.frames.empty()) fail("patchify: empty clip");
  const int res = clip.resolution;
  if (patch < 1 || res % patch != 0)
    fail("configuration error: resolution " + std::to_string(res) +
         " not divisible by patch size " + std::to_string(patch));
  PatchGrid grid;
  grid.frames = int(clip.frames.size());
  grid.grid_side = res / patch;
  grid.patches_per_frame = grid.grid_side * grid.grid_side;
  grid.patch = patch;
  grid.rows = Tensor(grid.frames * grid.patches_per_frame, 3 * patch * patch);
  for (int f = 0; f < grid.frames; ++f) {
    const Tensor& frame = clip.frames[size_t(f)];  // [res*res x 3]
    for (int py = 0; py < grid.grid_side; ++py)
      for (int px = 0; px < grid.grid_side; ++px) {
        const int row = f * grid.patches_per_frame + py * grid.grid_side + px;
        int at = 0;
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            for (int c = 0; c < 3; ++c)
              grid.rows(row, at++) = frame((py * patch + y) * res + (px * patch + x), c);
      }
  }
  return grid;
}

NormalizedClip unpatchify(const PatchGrid& grid) {
  NormalizedClip clip;
  const int res = grid.grid_side * grid.patch;
  clip.resolution = res;
  for (int f = 0; f < grid.frames; ++f) {
    Tensor frame(res * res, 3);
    for (int py = 0; py < grid.grid_side; ++py)
      for (int px = 0; px < grid.grid_side; ++px) {
        const int row = f * grid.patches_per_frame + py * grid.grid_side + px;
        int at = 0;
        for (int y = 0; y < grid.patch; ++y)
          for (int x = 0; x < grid.patch; ++x)
            for (int c = 0; c < 3; ++c)
              frame((py * grid.patch + y) * res + (px * grid.patch + x), c) = grid.rows(row, at++);
      }
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

Tensor temporal_attention_mask(int frames, int patches) {
  const int total = 1 + frames * patches;
  Tensor m(total, total);
  m(0, 0) = 1.0;  // cls is its own singleton group
  for (int f = 0; f < frames; ++f)
    for (int p = 0; p < patches; ++p) {
      const int q = 1 + f * patches + p;
      for (int g = 0; g < frames; ++g) m(q, 1 + g * patches + p) = 1.0;
    }
  return m;
}

Tensor spatial_attention_mask(int frames, int patches) {
  const int total = 1 + frames * patches;
  Tensor m(total, total);
  for (int k = 0; k < total; ++k) m(0, k) = 1.0;  // cls attends everywhere
  for (int f = 0; f < frames; ++f)
    for (int p = 0; p < patches; ++p) {
      const int q = 1 + f * patches + p;
      m(q, 0) = 1.0;  // every patch may also look at cls
      for (int o = 0; o < patches; ++o) m(q, 1 + f * patches + o) = 1.0;
    }
  return m;
}

VideoEncoder::VideoEncoder(ParameterTree& tree, const std::string& prefix,
                           const VideoEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  const int in = 3 * cfg.patch * cfg.patch;
  patch_proj_ = tree.create(prefix + ".patch_proj.weight", init_normal(rng, in, cfg.dim));
  patch_bias_ = tree.create(prefix + ".patch_proj.bias", Tensor::zeros(1, cfg.dim));
  cls_embed_ = tree.create(prefix + ".cls", init_normal(rng, 1, cfg.dim));
  spatial_pos_ = tree.create(prefix + ".pos.spatial", init_normal(rng, cfg.max_patches, cfg.dim));
  temporal_pos_ = tree.create(prefix + ".pos.temporal", init_normal(rng, cfg.max_frames, cfg.dim));
  blocks_.reserve(size_t(cfg.depth));
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.ln_temporal = LayerNorm(tree, bp + ".ln_temporal", cfg.dim);
    blk.temporal = AttentionBlock(tree, bp + ".temporal", cfg.dim, cfg.dim, cfg.heads, rng);
    blk.ln_spatial = LayerNorm(tree, bp + ".ln_spatial", cfg.dim);
    blk.spatial = AttentionBlock(tree, bp + ".spatial", cfg.dim, cfg.dim, cfg.heads, rng);
    blk.ln_ffn = LayerNorm(tree, bp + ".ln_ffn", cfg.dim);
    blk.ffn = FeedForward(tree, bp + ".ffn", cfg.dim, cfg.dim * 4, rng);
    blocks_.push_back(std::move(blk));
  }
  final_ln_ = LayerNorm(tree, prefix + ".final_ln", cfg.dim);
}

Var VideoEncoder::embed_patches(const PatchGrid& grid) const {
  if (grid.rows.cols() != patch_proj_->value.rows())
    fail("embed_patches shape mismatch: grid row length " + std::to_string(grid.rows.cols()) +
         " vs projection input " + std::to_string(patch_proj_->value.rows()));
  if (grid.patches_per_frame > cfg_.max_patches || grid.frames > cfg_.max_frames)
    fail("configuration error: clip exceeds positional tables");
  Var projected = add_rowvec(matmul(constant(grid.rows), patch_proj_), patch_bias_);
  std::vector<int> sp, tp;
  sp.reserve(size_t(grid.frames) * grid.patches_per_frame);
  tp.reserve(sp.capacity());
  for (int f = 0; f < grid.frames; ++f)
    for (int p = 0; p < grid.patches_per_frame; ++p) {
      sp.push_back(p);
      tp.push_back(f);
    }
  Var tokens = add(projected, add(gather_rows(spatial_pos_, sp), gather_rows(temporal_pos_, tp)));
  return concat_rows({cls_embed_, tokens});
}

Var VideoEncoder::temporal_stage(const Var& tokens, int block, int frames, int patches) const {
  const auto& blk = blocks_[size_t(block)];
  const Tensor mask = temporal_attention_mask(frames, patches);
  Var normed = blk.ln_temporal.apply(tokens);
  return add(tokens, blk.temporal.apply(normed, normed, mask));
}

Var VideoEncoder::spatial_stage(const Var& tokens, int block, int frames, int patches) const {
  const auto& blk = blocks_[size_t(block)];
  const Tensor mask = spatial_attention_mask(frames, patches);
  Var normed = blk.ln_spatial.apply(tokens);
  return add(tokens, blk.spatial.apply(normed, normed, mask));
}

Var VideoEncoder::divided_attention_block(const Var& tokens, int block, int frames,
                                          int patches) const {
  const auto& blk = blocks_[size_t(block)];
  Var temporal_cue = temporal_stage(tokens, block, frames, patches);
  Var spatial_cue = spatial_stage(temporal_cue, block, frames, patches);
  Var ffn_out = blk.ffn.apply(blk.ln_ffn.apply(spatial_cue));
  // Literal combination: the feed-forward of the spatial cue is summed
  // with the temporal cue. The switch restores the conventional chain.
  if (cfg_.timesformer_residuals) return add(spatial_cue, ffn_out);
  return add(ffn_out, temporal_cue);
}

Var VideoEncoder::encode(const NormalizedClip& clip) const {
  PatchGrid grid = patchify(clip, cfg_.patch);
  Var h = embed_patches(grid);
  for (int b = 0; b < cfg_.depth; ++b)
    h = divided_attention_block(h, b, grid.frames, grid.patches_per_frame);
  return final_ln_.apply(h);
}

}  // namespace mcg
