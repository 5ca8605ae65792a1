#include "crend/point_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crend {

namespace {

struct CornerWeights {
  // per axis: lower index, upper index, fractional part
  std::array<std::int64_t, 3> lo;
  std::array<std::int64_t, 3> hi;
  std::array<double, 3> frac;
};

CornerWeights corner_weights(const std::array<std::int64_t, 3>& dims,
                             const std::array<double, 3>& coord) {
  CornerWeights cw{};
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(coord[a], 0.0, 1.0);
    const double x = c * static_cast<double>(dims[a] - 1);
    const auto lo = static_cast<std::int64_t>(std::floor(x));
    cw.lo[a] = std::clamp<std::int64_t>(lo, 0, dims[a] - 1);
    cw.hi[a] = std::min<std::int64_t>(cw.lo[a] + 1, dims[a] - 1);
    cw.frac[a] = x - static_cast<double>(cw.lo[a]);
  }
  return cw;
}

}  // namespace

void SelectionConfig::validate() const {
  if (k < 1) throw std::invalid_argument("selection k must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("selection beta must be in [0,1]");
  if (n_points < 1) throw std::invalid_argument("selection n_points must be >= 1");
}

double uncertainty(double p_follicle, double p_ovary) {
  return std::min(std::abs(p_follicle - 0.5), std::abs(p_ovary - 0.5));
}

std::vector<std::array<double, 3>> scatter_candidates(std::int64_t count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::array<double, 3>> pts(static_cast<std::size_t>(count));
  for (auto& p : pts) {
    p[0] = unit(rng);
    p[1] = unit(rng);
    p[2] = unit(rng);
  }
  return pts;
}

std::vector<double> interpolate_at(const torch::Tensor& map, const std::array<double, 3>& coord) {
  TORCH_CHECK(map.dim() == 4, "interpolate_at expects a [C,D1,D2,D3] map");
  const auto m = map.to(torch::kFloat64).contiguous();
  const auto acc = m.accessor<double, 4>();
  const std::array<std::int64_t, 3> dims{m.size(1), m.size(2), m.size(3)};
  const CornerWeights cw = corner_weights(dims, coord);

  std::vector<double> out(static_cast<std::size_t>(m.size(0)), 0.0);
  for (std::int64_t c = 0; c < m.size(0); ++c) {
    double v = 0.0;
    for (int dx = 0; dx < 2; ++dx) {
      const double wx = dx ? cw.frac[0] : 1.0 - cw.frac[0];
      for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy ? cw.frac[1] : 1.0 - cw.frac[1];
        for (int dz = 0; dz < 2; ++dz) {
          const double wz = dz ? cw.frac[2] : 1.0 - cw.frac[2];
          v += wx * wy * wz *
               acc[c][dx ? cw.hi[0] : cw.lo[0]][dy ? cw.hi[1] : cw.lo[1]][dz ? cw.hi[2] : cw.lo[2]];
        }
      }
    }
    out[static_cast<std::size_t>(c)] = v;
  }
  return out;
}

PointBatch select_points(const torch::Tensor& coarse_probs, const SelectionConfig& cfg) {
  cfg.validate();
  TORCH_CHECK(coarse_probs.dim() == 4 && coarse_probs.size(0) == 2,
              "select_points expects a [2,D1,D2,D3] probability map");
  TORCH_CHECK(coarse_probs.numel() > 0, "select_points: empty map");

  std::mt19937_64 rng(cfg.seed);
  const std::int64_t n_candidates = cfg.k * cfg.n_points;
  const auto candidates = scatter_candidates(n_candidates, rng);

  // Score candidates on the interpolated probabilities. Double accessor keeps
  // the ranking identical to the brute-force re-scoring oracle.
  const auto map = coarse_probs.detach().to(torch::kFloat64).contiguous();
  const auto acc = map.accessor<double, 4>();
  const std::array<std::int64_t, 3> dims{map.size(1), map.size(2), map.size(3)};
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CornerWeights cw = corner_weights(dims, candidates[i]);
    double p[2] = {0.0, 0.0};
    for (int dx = 0; dx < 2; ++dx) {
      const double wx = dx ? cw.frac[0] : 1.0 - cw.frac[0];
      for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy ? cw.frac[1] : 1.0 - cw.frac[1];
        for (int dz = 0; dz < 2; ++dz) {
          const double wz = dz ? cw.frac[2] : 1.0 - cw.frac[2];
          const double w = wx * wy * wz;
          const std::int64_t x = dx ? cw.hi[0] : cw.lo[0];
          const std::int64_t y = dy ? cw.hi[1] : cw.lo[1];
          const std::int64_t z = dz ? cw.hi[2] : cw.lo[2];
          p[0] += w * acc[0][x][y][z];
          p[1] += w * acc[1][x][y][z];
        }
      }
    }
    score[i] = uncertainty(p[0], p[1]);
  }

  const auto n_uncertain = static_cast<std::int64_t>(
      std::floor(cfg.beta * static_cast<double>(cfg.n_points)));
  std::vector<std::int64_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)];
  });

  PointBatch batch;
  batch.coords.reserve(static_cast<std::size_t>(cfg.n_points));
  batch.source.reserve(static_cast<std::size_t>(cfg.n_points));
  for (std::int64_t i = 0; i < n_uncertain; ++i) {
    batch.coords.push_back(candidates[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    batch.source.push_back(PointSource::Uncertain);
  }
  // Step 3: the remainder is drawn fresh from the same stream.
  const auto uniform = scatter_candidates(cfg.n_points - n_uncertain, rng);
  for (const auto& p : uniform) {
    batch.coords.push_back(p);
    batch.source.push_back(PointSource::Uniform);
  }
  batch.bucket.assign(batch.coords.size(), PointBucket::Other);
  return batch;
}

torch::Tensor sample_map_at(const torch::Tensor& map,
                            std::span<const std::array<double, 3>> coords) {
  TORCH_CHECK(map.dim() == 4, "sample_map_at expects a [C,D1,D2,D3] map");
  const std::int64_t channels = map.size(0);
  const std::int64_t n = static_cast<std::int64_t>(coords.size());
  const std::array<std::int64_t, 3> dims{map.size(1), map.size(2), map.size(3)};
  const std::int64_t plane = dims[1] * dims[2];

  if (n == 0) {
    return torch::empty({0, channels}, map.options());
  }

  // Eight corner gathers with constant weights; gradient reaches the map
  // through index_select.
  auto idx = torch::empty({8, n}, torch::kInt64);
  auto weights = torch::empty({8, n}, torch::kFloat64);
  auto idx_acc = idx.accessor<std::int64_t, 2>();
  auto w_acc = weights.accessor<double, 2>();
  for (std::int64_t i = 0; i < n; ++i) {
    const CornerWeights cw = corner_weights(dims, coords[static_cast<std::size_t>(i)]);
    for (int corner = 0; corner < 8; ++corner) {
      const int dx = (corner >> 2) & 1, dy = (corner >> 1) & 1, dz = corner & 1;
      const std::int64_t x = dx ? cw.hi[0] : cw.lo[0];
      const std::int64_t y = dy ? cw.hi[1] : cw.lo[1];
      const std::int64_t z = dz ? cw.hi[2] : cw.lo[2];
      idx_acc[corner][i] = x * plane + y * dims[2] + z;
      w_acc[corner][i] = (dx ? cw.frac[0] : 1.0 - cw.frac[0]) *
                         (dy ? cw.frac[1] : 1.0 - cw.frac[1]) *
                         (dz ? cw.frac[2] : 1.0 - cw.frac[2]);
    }
  }
  weights = weights.to(map.dtype());

  const auto flat = map.reshape({channels, dims[0] * plane});
  auto out = torch::zeros({n, channels}, map.options());
  for (int corner = 0; corner < 8; ++corner) {
    const auto gathered = flat.index_select(1, idx[corner]);          // [C, N]
    out = out + gathered.transpose(0, 1) * weights[corner].unsqueeze(1);
  }
  return out;
}

torch::Tensor sample_nearest(const torch::Tensor& map,
                             std::span<const std::array<double, 3>> coords) {
  TORCH_CHECK(map.dim() == 4, "sample_nearest expects a [C,D1,D2,D3] map");
  torch::NoGradGuard no_grad;
  const auto m = map.to(torch::kFloat32).contiguous();
  const auto acc = m.accessor<float, 3 + 1>();
  const std::array<std::int64_t, 3> dims{m.size(1), m.size(2), m.size(3)};
  auto out = torch::empty({static_cast<std::int64_t>(coords.size()), m.size(0)}, torch::kFloat32);
  auto out_acc = out.accessor<float, 2>();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::array<std::int64_t, 3> v{};
    for (int a = 0; a < 3; ++a) {
      const double c = std::clamp(coords[i][a], 0.0, 1.0);
      v[a] = std::clamp<std::int64_t>(std::llround(c * static_cast<double>(dims[a] - 1)), 0,
                                      dims[a] - 1);
    }
    for (std::int64_t ch = 0; ch < m.size(0); ++ch) {
      out_acc[static_cast<std::int64_t>(i)][ch] = acc[ch][v[0]][v[1]][v[2]];
    }
  }
  return out;
}

}  // namespace crend
