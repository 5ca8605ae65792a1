#include "crend/rendering.hpp"

#include "crend/errors.hpp"

namespace crend {

torch::Tensor build_hybrid(const torch::Tensor& coarse_probs, const torch::Tensor& fine_feats,
                           const PointBatch& pts) {
  TORCH_CHECK(coarse_probs.dim() == 4 && fine_feats.dim() == 4,
              "build_hybrid expects [C,D1,D2,D3] maps");
  if (coarse_probs.size(0) != 2) {
    throw std::invalid_argument("build_hybrid: coarse map must have 2 channels, got " +
                                std::to_string(coarse_probs.size(0)));
  }
  const auto coarse_slice = sample_map_at(coarse_probs, pts.coords);  // [N,2]
  const auto fine_slice = sample_map_at(fine_feats, pts.coords);      // [N,Cf]
  return torch::cat({coarse_slice, fine_slice}, 1);
}

RenderingHeadImpl::RenderingHeadImpl(RenderingHeadOptions opts) : opts_(opts) {
  fc1_ = register_module("fc1", torch::nn::Linear(opts_.in_dim, opts_.hidden_width));
  fc2_ = register_module("fc2", torch::nn::Linear(opts_.hidden_width, opts_.out_dim));
}

torch::Tensor RenderingHeadImpl::forward(const torch::Tensor& hybrid) {
  TORCH_CHECK(hybrid.dim() == 2, "rendering head expects [N,in_dim] features");
  if (hybrid.size(1) != opts_.in_dim) {
    throw std::invalid_argument("rendering head configured for " + std::to_string(opts_.in_dim) +
                                "-dim features, got " + std::to_string(hybrid.size(1)));
  }
  return torch::sigmoid(fc2_->forward(torch::relu(fc1_->forward(hybrid))));
}

torch::Tensor RenderingLossValue::mean() const {
  return sum / static_cast<double>(std::max<std::int64_t>(n_points, 1));
}

RenderingLossValue rendering_loss(const torch::Tensor& pred_probs, const torch::Tensor& labels) {
  TORCH_CHECK(pred_probs.sizes() == labels.sizes(),
              "rendering_loss: prediction/label shape mismatch: ", pred_probs.sizes(), " vs ",
              labels.sizes());
  if (!torch::isfinite(pred_probs).all().item<bool>()) {
    throw DivergenceError("rendering_loss: non-finite prediction", "loss_r");
  }
  const auto p = pred_probs.clamp(kProbEps, 1.0 - kProbEps);
  const auto y = labels.to(p.dtype());
  const auto bce = -(y * torch::log(p) + (1.0 - y) * torch::log(1.0 - p));
  return {bce.sum(), pred_probs.size(0)};
}

}  // namespace crend
