#include "crend/backbone.hpp"

#include <stdexcept>
#include <string>

#include "crend/rendering.hpp"

namespace crend {

void BackboneConfig::validate() const {
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (n_pool < 2) throw std::invalid_argument("n_pool must be >= 2");
  if (dilation_rates[0] < 1 || dilation_rates[1] < 1) {
    throw std::invalid_argument("dilation rates must be >= 1");
  }
  if (fine_channels < 1) throw std::invalid_argument("fine_channels must be >= 1");
  if (n_classes != 2) throw std::invalid_argument("n_classes must be 2 (follicle, ovary)");
}

torch::nn::Sequential SegmentorBackboneImpl::conv_block(std::int64_t cin, std::int64_t cout,
                                                        std::int64_t dilation) {
  // padding == dilation keeps the spatial size for a 3x3x3 kernel.
  return torch::nn::Sequential(
      torch::nn::Conv3d(torch::nn::Conv3dOptions(cin, cout, 3)
                            .padding(dilation)
                            .dilation(dilation)
                            .bias(false)),
      torch::nn::InstanceNorm3d(torch::nn::InstanceNorm3dOptions(cout).affine(true)),
      torch::nn::ReLU());
}

SegmentorBackboneImpl::SegmentorBackboneImpl(BackboneConfig cfg, bool symmetric)
    : cfg_(cfg), symmetric_(symmetric) {
  cfg_.validate();
  const std::int64_t B = cfg_.base_channels;

  std::int64_t cin = 1;
  for (std::int64_t s = 0; s < cfg_.n_pool; ++s) {
    const std::int64_t cout = B << s;
    auto stage = torch::nn::Sequential(conv_block(cin, cout, cfg_.dilation_rates[0]));
    stage->extend(*conv_block(cout, cout, cfg_.dilation_rates[1]));
    enc_stages_.push_back(register_module("enc" + std::to_string(s), stage));
    cin = cout;
  }
  const std::int64_t bottleneck_ch = B << cfg_.n_pool;
  {
    auto stage = torch::nn::Sequential(conv_block(cin, bottleneck_ch, 1));
    stage->extend(*conv_block(bottleneck_ch, bottleneck_ch, 1));
    bottleneck_ = register_module("bottleneck", stage);
  }

  // Decoder runs from depth n_pool down to depth 1 (asymmetric) or 0
  // (symmetric baseline). At depth d the width is B << d.
  const std::int64_t stop_depth = symmetric_ ? 0 : 1;
  std::int64_t width = bottleneck_ch;
  int j = 0;
  for (std::int64_t depth = cfg_.n_pool - 1; depth >= stop_depth; --depth, ++j) {
    const std::int64_t cout = B << depth;
    deconvs_.push_back(register_module(
        "deconv" + std::to_string(j),
        torch::nn::ConvTranspose3d(
            torch::nn::ConvTranspose3dOptions(width, cout, 2).stride(2))));
    const std::int64_t skip = cout;  // encoder stage at this depth
    auto stage = torch::nn::Sequential(conv_block(cout + skip, cout, 1));
    stage->extend(*conv_block(cout, cout, 1));
    dec_stages_.push_back(register_module("dec" + std::to_string(j), stage));
    width = cout;
  }

  coarse_head_ = register_module(
      "coarse_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(width, cfg_.n_classes, 1)));
  if (!symmetric_) {
    fine_head_ = register_module(
        "fine_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(width, cfg_.fine_channels, 1)));
  }
}

std::pair<torch::Tensor, torch::Tensor> SegmentorBackboneImpl::forward(
    const torch::Tensor& patch) {
  TORCH_CHECK(patch.dim() == 5 && patch.size(1) == 1,
              "backbone expects [N,1,D1,D2,D3] input, got ", patch.sizes());
  const std::int64_t divisor = std::int64_t{1} << cfg_.n_pool;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t d = patch.size(2 + a);
    if (d % divisor != 0) {
      throw std::invalid_argument("patch axis " + std::to_string(a) + " has size " +
                                  std::to_string(d) + ", not divisible by " +
                                  std::to_string(divisor));
    }
  }

  auto x = patch;
  std::vector<torch::Tensor> skips;
  for (auto& stage : enc_stages_) {
    x = stage->forward(x);
    skips.push_back(x);
    x = torch::max_pool3d(x, 2);
  }
  x = bottleneck_->forward(x);

  for (std::size_t j = 0; j < deconvs_.size(); ++j) {
    x = deconvs_[j]->forward(x);
    const auto& skip = skips[skips.size() - 1 - j];
    x = dec_stages_[j]->forward(torch::cat({x, skip}, 1));
  }

  torch::Tensor fine;
  torch::Tensor logits = coarse_head_->forward(x);
  if (!symmetric_) {
    fine = fine_head_->forward(x);
    // Parameter-free restoration of the discarded deconv stage: trilinear
    // x2 upsample of the 2-channel logits.
    logits = torch::nn::functional::interpolate(
        logits, torch::nn::functional::InterpolateFuncOptions()
                    .scale_factor(std::vector<double>{2.0, 2.0, 2.0})
                    .mode(torch::kTrilinear)
                    .align_corners(false));
  } else {
    fine = torch::empty({0}, x.options());
  }
  return {torch::sigmoid(logits), fine};
}

std::pair<CoarsePrediction, FineFeatureMap> SegmentorBackboneImpl::predict_patch(
    const torch::Tensor& patch_3d) {
  TORCH_CHECK(patch_3d.dim() == 3, "predict_patch expects a [D1,D2,D3] patch");
  auto [probs, fine] = forward(patch_3d.unsqueeze(0).unsqueeze(0));
  CoarsePrediction coarse{probs.squeeze(0)};
  FineFeatureMap fine_map{symmetric_ ? fine : fine.squeeze(0)};
  return {std::move(coarse), std::move(fine_map)};
}

std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t total = 0;
  for (const auto& p : m.parameters()) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

std::int64_t backbone_param_count(const BackboneConfig& cfg, bool include_heads,
                                  std::int64_t hidden_width) {
  SegmentorBackbone net(cfg, /*symmetric=*/false);
  std::int64_t total = parameter_count(*net);
  if (include_heads) {
    RenderingHead head(
        RenderingHeadOptions{2 + cfg.fine_channels, hidden_width, cfg.n_classes});
    total += parameter_count(*head);
  }
  return total;
}

std::int64_t symmetric_baseline_param_count(const BackboneConfig& cfg) {
  SegmentorBackbone net(cfg, /*symmetric=*/true);
  return parameter_count(*net);
}

}  // namespace crend
