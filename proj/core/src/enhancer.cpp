#include "semkit/enhancer.hpp"

#include <stdexcept>
#include <string>

namespace semkit {

namespace {

void validate_bins(const std::vector<double>& bins) {
  if (bins.empty()) throw std::invalid_argument("enhancer: empty depth bins");
  if (bins[0] <= 0) throw std::invalid_argument("enhancer: bins must be > 0");
  for (size_t i = 1; i < bins.size(); ++i)
    if (bins[i] <= bins[i - 1])
      throw std::invalid_argument("enhancer: bins must be strictly increasing");
}

}  // namespace

SpatialEnhancer::SpatialEnhancer(const EnhancerConfig& cfg, ParamStore& ps,
                                 Rng& rng)
    : cfg_(cfg) {
  if (cfg.c_img < 1 || cfg.c_depth < 0 || cfg.d_model < 1)
    throw std::invalid_argument("enhancer: bad channel config");
  validate_bins(cfg.bins);
  const int64_t cin = cfg.c_img + cfg.c_depth;
  const int64_t k = static_cast<int64_t>(cfg.bins.size());
  mlp_p = Mlp(ps, "enhancer.mlp_p", {3, cfg.d_model, cfg.d_model}, rng);
  mlp_w = Mlp(ps, "enhancer.mlp_w", {cin, cfg.d_model, k}, rng);
  // single affine fusion so a pass-through initialization is expressible
  mlp_f = Mlp(ps, "enhancer.mlp_f", {cin + cfg.d_model, cfg.d_model}, rng);
}

std::vector<Tensor> SpatialEnhancer::frustum_grid(
    const CameraRig& rig, int h, int w, const std::vector<double>& bins,
    bool camera_frame) {
  validate_bins(bins);
  if (h < 1 || w < 1) throw std::invalid_argument("frustum_grid: empty grid");
  const int64_t k = static_cast<int64_t>(bins.size());
  std::vector<Tensor> out;
  out.reserve(rig.num_views());
  for (int v = 0; v < rig.num_views(); ++v) {
    std::vector<double> data;
    data.reserve(static_cast<size_t>(h) * w * k * 3);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        auto pts = frustum_points(rig, v, j + 0.5, i + 0.5, bins, camera_frame);
        for (const Vec3& p : pts) {
          data.push_back(p.x);
          data.push_back(p.y);
          data.push_back(p.z);
        }
      }
    out.push_back(Tensor::from({static_cast<int64_t>(h) * w * k, 3},
                               std::move(data)));
  }
  return out;
}

namespace {

// sum_k W[n,k] ep[n,k,:] via a batched [N,1,K] x [N,K,d] product
Tensor weighted_embedding(const Tensor& ep, const Tensor& logits) {
  const int64_t n = ep.dim(0), k = ep.dim(1), d = ep.dim(2);
  if (logits.rank() != 2 || logits.dim(0) != n || logits.dim(1) != k)
    throw std::invalid_argument("position_embedding: logits must be [N,K]");
  Tensor w = reshape(softmax(logits, 1), {n, 1, k});
  return reshape(matmul(w, ep), {n, d});
}

}  // namespace

Tensor SpatialEnhancer::position_embedding(const Tensor& points,
                                           const Tensor& logits) const {
  const int64_t k = static_cast<int64_t>(cfg_.bins.size());
  const int64_t n = logits.dim(0);
  if (points.rank() != 2 || points.dim(0) != n * k || points.dim(1) != 3)
    throw std::invalid_argument("position_embedding: points must be [N*K,3]");
  return weighted_embedding(reshape(mlp_p(points), {n, k, cfg_.d_model}),
                            logits);
}

std::vector<Tensor> SpatialEnhancer::point_embeddings(
    const std::vector<Tensor>& points) const {
  const int64_t k = static_cast<int64_t>(cfg_.bins.size());
  std::vector<Tensor> out;
  out.reserve(points.size());
  for (const Tensor& p : points) {
    if (!p.defined()) {
      out.push_back(Tensor());
      continue;
    }
    if (p.rank() != 2 || p.dim(1) != 3 || p.dim(0) % k)
      throw std::invalid_argument("point_embeddings: points must be [N*K,3]");
    out.push_back(
        reshape(mlp_p(p), {p.dim(0) / k, k, cfg_.d_model}));
  }
  return out;
}

EnhanceResult SpatialEnhancer::enhance_embedded(
    const FeatureGrid& grid, const std::vector<Tensor>& ep) const {
  const int64_t cells = static_cast<int64_t>(grid.h) * grid.w;
  if (cfg_.enabled && ep.size() != grid.views.size())
    throw std::invalid_argument(
        "enhance: rig has " + std::to_string(ep.size()) +
        " views, grid has " + std::to_string(grid.views.size()));
  EnhanceResult out;
  for (size_t v = 0; v < grid.views.size(); ++v) {
    const ViewGrid& vg = grid.views[v];
    if (!vg.fimg.defined() || vg.fimg.rank() != 2 ||
        vg.fimg.dim(0) != cells || vg.fimg.dim(1) != cfg_.c_img)
      throw std::invalid_argument("enhance: F^I must be [H*W, c_img]");
    // depth slice: zeroed when disabled or absent (monocular fallback)
    Tensor fd;
    if (cfg_.use_depth && vg.fdepth.defined()) {
      if (vg.fdepth.dim(0) != cells || vg.fdepth.dim(1) != cfg_.c_depth)
        throw std::invalid_argument("enhance: F^D must be [H*W, c_depth]");
      fd = vg.fdepth;
    } else {
      fd = Tensor::zeros({cells, cfg_.c_depth});
    }
    Tensor xin = concat(1, {vg.fimg, fd});
    Tensor emb;
    if (cfg_.enabled) {
      Tensor logits = mlp_w(xin);
      emb = weighted_embedding(ep[v], logits);
      out.depth_logits.push_back(logits);
    } else {
      emb = Tensor::zeros({cells, cfg_.d_model});
    }
    out.tokens.push_back(mlp_f(concat(1, {xin, emb})));
  }
  return out;
}

EnhanceResult SpatialEnhancer::enhance(
    const FeatureGrid& grid, const std::vector<Tensor>& points) const {
  return enhance_embedded(grid,
                          cfg_.enabled ? point_embeddings(points)
                                       : std::vector<Tensor>(grid.views.size()));
}

EnhanceResult SpatialEnhancer::enhance(const CameraRig& rig,
                                       const FeatureGrid& grid) const {
  std::vector<Tensor> pts;
  if (cfg_.enabled) {
    if (rig.num_views() != static_cast<int>(grid.views.size()))
      throw std::invalid_argument("enhance: rig/grid view count mismatch");
    pts = frustum_grid(rig, grid.h, grid.w, cfg_.bins,
                       cfg_.frame_mode == FrameMode::camera);
  } else {
    pts.resize(grid.views.size());
  }
  return enhance(grid, pts);
}

DepthTargets depth_loss_targets(const std::vector<double>& depth,
                                const std::vector<uint8_t>& valid,
                                const std::vector<double>& bins) {
  validate_bins(bins);
  if (valid.size() != depth.size())
    throw std::invalid_argument("depth_loss_targets: mask size mismatch");
  DepthTargets out;
  out.cls.resize(depth.size(), 0);
  out.mask.resize(depth.size(), 0);
  for (size_t i = 0; i < depth.size(); ++i) {
    if (!valid[i] || !(depth[i] > 0)) continue;
    out.cls[i] = nearest_depth_bin(depth[i], bins);
    out.mask[i] = 1;
  }
  return out;
}

}  // namespace semkit
