#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crend/volume.hpp"

namespace crend {

/// Parameters of one synthetic ovary/follicle volume. Intensities mimic the
/// blurred speckle-corrupted look of ultrasound; geometry stays exact in the
/// label mask (blur and noise touch intensities only).
struct PhantomSpec {
  Dims3 volume_dims{32, 32, 16};
  Spacing3 spacing{0.2, 0.2, 0.2};
  std::pair<int, int> n_follicles{1, 4};            // inclusive count range
  std::pair<double, double> follicle_radius_mm{0.4, 1.0};
  std::pair<double, double> ovary_axes_mm{2.0, 2.8};  // ellipsoid semi-axes range
  double speckle_strength = 0.3;                    // in [0,1)
  double boundary_blur_sigma_mm = 0.25;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Deterministic given (spec, spec.seed): same inputs give byte-identical
/// outputs. Throws PlacementError when the requested follicle count cannot be
/// placed without overlap within the retry budget.
std::pair<Volume, LabelMask> generate_phantom(const PhantomSpec& spec);

struct ManifestEntry {
  std::string image;
  std::string label;
  std::uint64_t seed = 0;
  int n_follicles = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> volumes;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

/// Writes n_volumes (image,label) .cvol pairs under out_dir plus
/// manifest.json; per-volume seed is spec.seed + index. Returns the manifest.
DatasetManifest generate_dataset(const PhantomSpec& spec, int n_volumes,
                                 const std::string& out_dir);

}  // namespace crend
