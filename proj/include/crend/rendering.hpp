#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "crend/point_selection.hpp"

namespace crend {

/// Per-point hybrid feature: concat(2-dim coarse probability slice,
/// fine feature slice), both trilinearly sampled at the same normalized
/// coordinates. Differentiable through both maps.
torch::Tensor build_hybrid(const torch::Tensor& coarse_probs, const torch::Tensor& fine_feats,
                           const PointBatch& pts);

struct RenderingHeadOptions {
  std::int64_t in_dim = 98;  // 2 coarse + 96 fine
  std::int64_t hidden_width = 256;
  std::int64_t out_dim = 2;
};

/// One-hidden-layer MLP shared across points; sigmoid outputs per channel.
class RenderingHeadImpl : public torch::nn::Module {
 public:
  explicit RenderingHeadImpl(RenderingHeadOptions opts = {});
  torch::Tensor forward(const torch::Tensor& hybrid);  // [N,in] -> [N,out] probs
  const RenderingHeadOptions& options() const { return opts_; }

 private:
  RenderingHeadOptions opts_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};

TORCH_MODULE(RenderingHead);

/// Predictions clamped to [eps, 1-eps] before the logs.
inline constexpr double kProbEps = 1e-7;

struct RenderingLossValue {
  torch::Tensor sum;        // summed over points and channels
  std::int64_t n_points = 0;
  torch::Tensor mean() const;  // sum / n_points (channel sum kept)
};

/// Binary cross entropy summed over the selected points and both channels.
/// Throws DivergenceError on non-finite predictions.
RenderingLossValue rendering_loss(const torch::Tensor& pred_probs, const torch::Tensor& labels);

}  // namespace crend
