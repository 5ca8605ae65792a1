#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace crend {

/// Biased point sampling: kN random seeds, the floor(beta*N) most uncertain
/// kept, the rest drawn uniformly afresh.
struct SelectionConfig {
  std::int64_t k = 2;
  double beta = 0.7;
  std::int64_t n_points = 512;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

enum class PointSource : std::uint8_t { Uncertain, Uniform };

enum class PointBucket : std::uint8_t {
  HighConfFollicle,
  HighConfOvary,
  UncertainFollicle,
  UncertainOvary,
  Other,
};

/// Points in normalized patch coordinates [0,1]^3. Axis a of a coordinate
/// maps to continuous voxel index c * (dims[a]-1) (voxel centers at integer
/// indices). labels/bucket are filled by the trainer and contrastive head.
struct PointBatch {
  std::vector<std::array<double, 3>> coords;
  std::vector<PointSource> source;
  torch::Tensor labels;  // [N,2] float, training only
  std::vector<PointBucket> bucket;

  std::int64_t size() const { return static_cast<std::int64_t>(coords.size()); }
};

/// min over channels of |p_c - 0.5|; 0 = maximally uncertain, 0.5 = confident.
double uncertainty(double p_follicle, double p_ovary);

/// Candidate stream contract (tests re-derive it): three consecutive
/// uniform_real_distribution<double>(0,1) draws per point from the given
/// mt19937_64, axis order 0,1,2.
std::vector<std::array<double, 3>> scatter_candidates(std::int64_t count, std::mt19937_64& rng);

/// Trilinear interpolation of a [C,D1,D2,D3] map at one normalized point,
/// computed in double on the raw values. Coordinates are clamped to [0,1]^3.
std::vector<double> interpolate_at(const torch::Tensor& map, const std::array<double, 3>& coord);

/// The three-step selection. Deterministic given (map, cfg): candidates and
/// uniform points come from mt19937_64(cfg.seed); ties in the uncertainty
/// ranking break by candidate index (stable sort).
PointBatch select_points(const torch::Tensor& coarse_probs, const SelectionConfig& cfg);

/// Trilinear map sampling at many points, differentiable with respect to the
/// map values: returns [N, C] with C the map's channel count. Coordinates
/// outside [0,1]^3 are clamped.
torch::Tensor sample_map_at(const torch::Tensor& map, std::span<const std::array<double, 3>> coords);

/// Nearest-voxel sampling (non-differentiable), used for binary point labels.
torch::Tensor sample_nearest(const torch::Tensor& map, std::span<const std::array<double, 3>> coords);

}  // namespace crend
