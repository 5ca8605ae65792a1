#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include <torch/torch.h>

namespace crend {

/// Asymmetric 3D encoder-decoder: n_pool pooling stages with two dilated
/// convs each, a decoder one deconv short of symmetric, a 2-channel sigmoid
/// head upsampled back to full size, and a 96-channel fine feature head at
/// half size.
struct BackboneConfig {
  std::int64_t base_channels = 16;
  std::int64_t n_pool = 4;
  std::array<std::int64_t, 2> dilation_rates{1, 2};
  std::int64_t fine_channels = 96;
  std::int64_t n_classes = 2;

  std::int64_t n_deconv() const { return n_pool - 1; }  // structural asymmetry
  void validate() const;
};

/// Full-resolution per-voxel class probabilities, channel 0 = follicle,
/// channel 1 = ovary, independent sigmoids.
struct CoarsePrediction {
  torch::Tensor probs;  // [2, D1, D2, D3]
};

struct FineFeatureMap {
  torch::Tensor feats;  // [fine_channels, D1/2, D2/2, D3/2]
};

class SegmentorBackboneImpl : public torch::nn::Module {
 public:
  /// symmetric=true builds the plain 4-deconv baseline used for the
  /// parameter comparison: full-size head, no fine features.
  explicit SegmentorBackboneImpl(BackboneConfig cfg, bool symmetric = false);

  /// patch: [N, 1, D1, D2, D3], spatial dims divisible by 2^n_pool.
  /// Returns (probs [N,2,D1,D2,D3], fine [N,96,D1/2,D2/2,D3/2]).
  /// The symmetric baseline returns an empty fine tensor.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& patch);

  /// Single-patch convenience wrapper around forward().
  std::pair<CoarsePrediction, FineFeatureMap> predict_patch(const torch::Tensor& patch_3d);

  std::int64_t upsample_stage_count() const { return static_cast<std::int64_t>(deconvs_.size()); }
  const BackboneConfig& config() const { return cfg_; }
  bool is_symmetric() const { return symmetric_; }

 private:
  torch::nn::Sequential conv_block(std::int64_t cin, std::int64_t cout, std::int64_t dilation);

  BackboneConfig cfg_;
  bool symmetric_ = false;
  std::vector<torch::nn::Sequential> enc_stages_;
  torch::nn::Sequential bottleneck_{nullptr};
  std::vector<torch::nn::ConvTranspose3d> deconvs_;
  std::vector<torch::nn::Sequential> dec_stages_;
  torch::nn::Conv3d coarse_head_{nullptr};
  torch::nn::Conv3d fine_head_{nullptr};
};

TORCH_MODULE(SegmentorBackbone);

/// Number of trainable scalars in a module.
std::int64_t parameter_count(const torch::nn::Module& m);

/// Parameter count of the asymmetric backbone; include_heads adds the
/// rendering-head MLP (in dim 2 + fine_channels).
std::int64_t backbone_param_count(const BackboneConfig& cfg, bool include_heads,
                                  std::int64_t hidden_width = 256);

/// Parameter count of the symmetric 4-deconv baseline at the same widths.
std::int64_t symmetric_baseline_param_count(const BackboneConfig& cfg);

}  // namespace crend
