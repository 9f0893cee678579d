#pragma once

#include <vector>

#include "semkit/camera.hpp"
#include "semkit/nn.hpp"

namespace semkit {

// One camera view's feature grid, flattened row-major to H*W cells.
struct ViewGrid {
  Tensor fimg;                      // [H*W, c_img]
  Tensor fdepth;                    // [H*W, c_depth], optional
  std::vector<double> depth;        // metric depth per cell, optional
  std::vector<uint8_t> depth_valid; // parallel to depth
};

struct FeatureGrid {
  int h = 0, w = 0;
  std::vector<ViewGrid> views;
};

// Frame the lifted points are expressed in. `camera` skips the extrinsic
// inverse, leaving per-view camera-frame points (ablation arm).
enum class FrameMode { base, camera };

struct EnhancerConfig {
  int c_img = 8;
  int c_depth = 8;
  int d_model = 32;
  bool use_depth = true;   // false zeroes the depth-feature slice
  bool enabled = true;     // false skips the 3D lifting path entirely
  FrameMode frame_mode = FrameMode::base;
  std::vector<double> bins;  // strictly increasing candidate depths
};

struct EnhanceResult {
  std::vector<Tensor> tokens;        // per view [H*W, d_model]
  std::vector<Tensor> depth_logits;  // per view [H*W, K]; empty when disabled
};

// Lifts per-view 2D feature cells into a unified 3D representation: each
// cell's ray is sampled at K candidate depths, the K points are embedded by
// an MLP, averaged under a predicted per-cell depth distribution, and fused
// with the image (and optional depth) features.
class SpatialEnhancer {
 public:
  SpatialEnhancer() = default;
  SpatialEnhancer(const EnhancerConfig& cfg, ParamStore& ps, Rng& rng);

  // Candidate-depth points for every cell of an h x w grid, one tensor per
  // view of shape [H*W*K, 3]. Cells are sampled at their centers
  // (u = col + 0.5, v = row + 0.5); bins vary fastest.
  static std::vector<Tensor> frustum_grid(const CameraRig& rig, int h, int w,
                                          const std::vector<double>& bins,
                                          bool camera_frame);

  // Depth-distribution-weighted point embedding for one view.
  // points: [N*K, 3], logits: [N, K]; returns [N, d_model].
  Tensor position_embedding(const Tensor& points, const Tensor& logits) const;

  // E^P per view: the point MLP applied to frustum points, [H*W, K, d].
  // Depends only on parameters and rig geometry, so one evaluation can be
  // shared by every sample in a batch.
  std::vector<Tensor> point_embeddings(const std::vector<Tensor>& points) const;

  // enhance() with precomputed E^P from point_embeddings()
  EnhanceResult enhance_embedded(const FeatureGrid& grid,
                                 const std::vector<Tensor>& ep) const;

  // points must come from frustum_grid with this config's bins/frame mode;
  // passing them in lets callers reuse the geometry across a batch.
  EnhanceResult enhance(const FeatureGrid& grid,
                        const std::vector<Tensor>& points) const;
  EnhanceResult enhance(const CameraRig& rig, const FeatureGrid& grid) const;

  const EnhancerConfig& config() const { return cfg_; }

  Mlp mlp_p, mlp_w, mlp_f;  // point embed, depth logits, fusion

 private:
  EnhancerConfig cfg_;
};

struct DepthTargets {
  std::vector<int64_t> cls;    // nearest-bin class per cell
  std::vector<uint8_t> mask;   // 0 where depth invalid
};

// Per-cell classification targets for the depth distribution. Cells with
// valid == 0 or non-positive depth are masked, never rejected.
DepthTargets depth_loss_targets(const std::vector<double>& depth,
                                const std::vector<uint8_t>& valid,
                                const std::vector<double>& bins);

}  // namespace semkit
