#include "crend/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "crend/errors.hpp"

namespace crend {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Sphere {
  std::array<double, 3> center_vox;
  double radius_mm;
};

// Separable Gaussian blur with per-axis sigma in voxels. Border kernels are
// renormalized over the in-range taps.
void gaussian_blur(std::vector<float>& data, const Dims3& dims,
                   const std::array<double, 3>& sigma_vox) {
  const std::int64_t strides[3] = {dims[1] * dims[2], dims[2], 1};
  std::vector<float> tmp(data.size());
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = sigma_vox[axis];
    if (sigma <= 0.0) continue;
    const std::int64_t radius = std::max<std::int64_t>(1, std::llround(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (std::int64_t t = -radius; t <= radius; ++t) {
      kernel[static_cast<std::size_t>(t + radius)] =
          std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
    }
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::int64_t n_line = dims[axis];
    for (std::int64_t u = 0; u < dims[a1]; ++u) {
      for (std::int64_t v = 0; v < dims[a2]; ++v) {
        const std::int64_t base = u * strides[a1] + v * strides[a2];
        for (std::int64_t t = 0; t < n_line; ++t) {
          double acc = 0.0, wsum = 0.0;
          const std::int64_t lo = std::max<std::int64_t>(0, t - radius);
          const std::int64_t hi = std::min<std::int64_t>(n_line - 1, t + radius);
          for (std::int64_t w = lo; w <= hi; ++w) {
            const double kw = kernel[static_cast<std::size_t>(w - t + radius)];
            acc += kw * data[base + w * strides[axis]];
            wsum += kw;
          }
          tmp[base + t * strides[axis]] = static_cast<float>(acc / wsum);
        }
      }
    }
    std::swap(data, tmp);
  }
}

double ellipsoid_coordinate(const std::array<double, 3>& p, const std::array<double, 3>& c,
                            const std::array<double, 3>& axes_vox) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = (p[a] - c[a]) / axes_vox[a];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (volume_dims[a] < 1) throw std::invalid_argument("phantom dims must be >= 1");
    if (!(spacing[a] > 0.0)) throw std::invalid_argument("phantom spacing must be positive");
  }
  if (n_follicles.first < 0 || n_follicles.second < n_follicles.first) {
    throw std::invalid_argument("n_follicles range empty or negative");
  }
  if (!(follicle_radius_mm.first > 0.0) ||
      follicle_radius_mm.second < follicle_radius_mm.first) {
    throw std::invalid_argument("follicle radius range empty or non-positive");
  }
  if (!(ovary_axes_mm.first > 0.0) || ovary_axes_mm.second < ovary_axes_mm.first) {
    throw std::invalid_argument("ovary axes range empty or non-positive");
  }
  if (!(speckle_strength >= 0.0 && speckle_strength < 1.0)) {
    throw std::invalid_argument("speckle_strength must be in [0,1)");
  }
  if (boundary_blur_sigma_mm < 0.0) {
    throw std::invalid_argument("boundary_blur_sigma_mm must be >= 0");
  }
}

std::pair<Volume, LabelMask> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Dims3& dims = spec.volume_dims;
  const Spacing3& sp = spec.spacing;
  const std::int64_t n = voxel_count(dims);

  // Ovary ellipsoid: per-axis semi-axes, center jittered around the volume
  // center by up to 5% of each dim.
  std::array<double, 3> axes_vox{}, axes_mm{}, center{};
  for (int a = 0; a < 3; ++a) {
    axes_mm[a] = spec.ovary_axes_mm.first +
                 unit(rng) * (spec.ovary_axes_mm.second - spec.ovary_axes_mm.first);
    axes_vox[a] = axes_mm[a] / sp[a];
    center[a] = (dims[a] - 1) / 2.0 + (unit(rng) * 2.0 - 1.0) * 0.05 * dims[a];
  }
  const double min_axis_mm = *std::min_element(axes_mm.begin(), axes_mm.end());
  const double max_sp = *std::max_element(sp.begin(), sp.end());

  std::uniform_int_distribution<int> count_dist(spec.n_follicles.first, spec.n_follicles.second);
  const int requested = count_dist(rng);
  std::uniform_real_distribution<double> radius_dist(spec.follicle_radius_mm.first,
                                                     spec.follicle_radius_mm.second);

  // Rejection sampling: follicles fully inside the ovary (margin 0.85 in
  // normalized ellipsoid units) and pairwise separated by a 3-voxel gap so
  // rasterized spheres stay 26-disconnected.
  std::vector<Sphere> follicles;
  for (int f = 0; f < requested; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double r_mm = radius_dist(rng);
      std::array<double, 3> c{};
      for (int a = 0; a < 3; ++a) {
        c[a] = center[a] + (unit(rng) * 2.0 - 1.0) * axes_vox[a];
      }
      if (ellipsoid_coordinate(c, center, axes_vox) + r_mm / min_axis_mm > 0.85) continue;
      bool overlaps = false;
      for (const Sphere& other : follicles) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double d = (c[a] - other.center_vox[a]) * sp[a];
          d2 += d * d;
        }
        const double min_dist = r_mm + other.radius_mm + 3.0 * max_sp;
        if (d2 < min_dist * min_dist) {
          overlaps = true;
          break;
        }
      }
      if (!overlaps) {
        follicles.push_back({c, r_mm});
        placed = true;
      }
    }
    if (!placed) {
      throw PlacementError("could not place follicle " + std::to_string(f + 1) + " of " +
                               std::to_string(requested) + " without overlap (placed " +
                               std::to_string(follicles.size()) + ")",
                           requested, static_cast<int>(follicles.size()));
    }
  }

  // Rasterize. Exact geometry goes to the label mask; intensities get the
  // blurred, speckled rendition afterwards.
  LabelMask mask;
  mask.dims = dims;
  mask.spacing = sp;
  mask.follicle.assign(static_cast<std::size_t>(n), 0);
  mask.ovary.assign(static_cast<std::size_t>(n), 0);

  Volume vol;
  vol.dims = dims;
  vol.spacing = sp;
  vol.data.assign(static_cast<std::size_t>(n), 0.35f);  // background tissue

  std::size_t idx = 0;
  for (std::int64_t i = 0; i < dims[0]; ++i) {
    for (std::int64_t j = 0; j < dims[1]; ++j) {
      for (std::int64_t k = 0; k < dims[2]; ++k, ++idx) {
        const std::array<double, 3> p{static_cast<double>(i), static_cast<double>(j),
                                      static_cast<double>(k)};
        if (ellipsoid_coordinate(p, center, axes_vox) <= 1.0) {
          mask.ovary[idx] = 1;
          vol.data[idx] = 0.75f;  // stroma, brighter than background
        }
        for (const Sphere& s : follicles) {
          double d2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double d = (p[a] - s.center_vox[a]) * sp[a];
            d2 += d * d;
          }
          if (d2 <= s.radius_mm * s.radius_mm) {
            mask.follicle[idx] = 1;
            mask.ovary[idx] = 1;
            vol.data[idx] = 0.12f;  // anechoic fluid
            break;
          }
        }
      }
    }
  }

  if (spec.boundary_blur_sigma_mm > 0.0) {
    gaussian_blur(vol.data, dims,
                  {spec.boundary_blur_sigma_mm / sp[0], spec.boundary_blur_sigma_mm / sp[1],
             	   spec.boundary_blur_sigma_mm / sp[2]});
  }

  // Multiplicative speckle I*(1 + strength*(2u-1)), then min-max back to [0,1].
  if (spec.speckle_strength > 0.0) {
    for (float& x : vol.data) {
      x = static_cast<float>(x * (1.0 + spec.speckle_strength * (2.0 * unit(rng) - 1.0)));
    }
  }
  const auto [lo, hi] = std::minmax_element(vol.data.begin(), vol.data.end());
  if (*hi > *lo) {
    const float mn = *lo, scale = 1.0f / (*hi - *lo);
    for (float& x : vol.data) x = (x - mn) * scale;
  }

  return {std::move(vol), std::move(mask)};
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    for (const auto& e : j.at("volumes")) {
      ManifestEntry entry;
      entry.image = e.at("image").get<std::string>();
      entry.label = e.at("label").get<std::string>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      entry.n_follicles = e.at("n_follicles").get<int>();
      m.volumes.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad manifest field: " + e.what());
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["volumes"] = json::array();
  for (const auto& e : m.volumes) {
    j["volumes"].push_back({{"image", e.image},
                            {"label", e.label},
                            {"seed", e.seed},
                            {"n_follicles", e.n_follicles}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest generate_dataset(const PhantomSpec& spec, int n_volumes,
                                 const std::string& out_dir) {
  if (n_volumes < 0) throw std::invalid_argument("n_volumes must be >= 0");
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  for (int v = 0; v < n_volumes; ++v) {
    PhantomSpec per = spec;
    per.seed = spec.seed + static_cast<std::uint64_t>(v);
    auto [vol, mask] = generate_phantom(per);

    char name[32];
    std::snprintf(name, sizeof(name), "image_%03d.cvol", v);
    const std::string image_path = (fs::path(out_dir) / name).string();
    std::snprintf(name, sizeof(name), "label_%03d.cvol", v);
    const std::string label_path = (fs::path(out_dir) / name).string();

    save_volume(image_path, vol);
    save_label_mask(label_path, mask);

    // Placed spheres are pairwise 26-disconnected; the instance count is the
    // number of spheres that rasterized to at least one voxel. Recount by
    // flood fill so the manifest reflects the written mask.
    ManifestEntry entry;
    entry.image = image_path;
    entry.label = label_path;
    entry.seed = per.seed;
    entry.n_follicles = 0;
    {
      const Dims3& d = mask.dims;
      std::vector<char> seen(mask.follicle.size(), 0);
      std::vector<std::int64_t> stack;
      for (std::int64_t start = 0; start < static_cast<std::int64_t>(mask.follicle.size());
           ++start) {
        if (!mask.follicle[static_cast<std::size_t>(start)] ||
            seen[static_cast<std::size_t>(start)])
          continue;
        ++entry.n_follicles;
        seen[static_cast<std::size_t>(start)] = 1;
        stack.assign(1, start);
        while (!stack.empty()) {
          const std::int64_t cur = stack.back();
          stack.pop_back();
          const std::int64_t ci = cur / (d[1] * d[2]);
          const std::int64_t cj = (cur / d[2]) % d[1];
          const std::int64_t ck = cur % d[2];
          for (std::int64_t di = -1; di <= 1; ++di)
            for (std::int64_t dj = -1; dj <= 1; ++dj)
              for (std::int64_t dk = -1; dk <= 1; ++dk) {
                const std::int64_t ni = ci + di, nj = cj + dj, nk = ck + dk;
                if (ni < 0 || nj < 0 || nk < 0 || ni >= d[0] || nj >= d[1] || nk >= d[2])
                  continue;
                const auto lin = static_cast<std::size_t>((ni * d[1] + nj) * d[2] + nk);
                if (mask.follicle[lin] && !seen[lin]) {
                  seen[lin] = 1;
                  stack.push_back(static_cast<std::int64_t>(lin));
                }
              }
        }
      }
    }
    manifest.volumes.push_back(entry);
  }

  save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace crend
