#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace crend {

using Dims3 = std::array<std::int64_t, 3>;
using Spacing3 = std::array<double, 3>;

inline std::int64_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

/// Scalar intensity grid with physical voxel spacing (mm per voxel).
/// Data is C-ordered: (i,j,k) -> (i*dims[1] + j)*dims[2] + k.
struct Volume {
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::vector<float> data;

  float& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
  float at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[(i * dims[1] + j) * dims[2] + k];
  }

  // Throws std::invalid_argument when dims/spacing/data break the type
  // invariants (positive spacing, dims >= 1, finite values, size match).
  void validate() const;
};

/// Two nested binary structures on the same grid. On disk this is a single
/// u8 volume: 0 = background, 1 = ovary-only, 2 = follicle (implies ovary).
struct LabelMask {
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> follicle;
  std::vector<std::uint8_t> ovary;

  std::uint8_t follicle_at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return follicle[(i * dims[1] + j) * dims[2] + k];
  }
  std::uint8_t ovary_at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return ovary[(i * dims[1] + j) * dims[2] + k];
  }

  // follicle subset-of ovary, values in {0,1}.
  void validate() const;
};

// ---------------------------------------------------------------------------
// .cvol file format: one UTF-8 JSON header line terminated by '\n' with keys
// {"dims":[d1,d2,d3],"spacing":[s1,s2,s3],"dtype":"f32"|"u8","order":"C"},
// followed by dims-product * dtype-size bytes, little-endian, C order.
// ---------------------------------------------------------------------------

enum class CvolDtype { F32, U8 };

/// Raw .cvol contents, bit-exact, no normalization applied.
struct CvolRaw {
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};
  CvolDtype dtype = CvolDtype::F32;
  std::vector<float> f32;         // filled when dtype == F32
  std::vector<std::uint8_t> u8;   // filled when dtype == U8
};

// Throws FormatError (bad header) or CorruptionError (payload size mismatch).
CvolRaw read_cvol(const std::string& path);
void write_cvol(const std::string& path, const Dims3& dims, const Spacing3& spacing,
                const float* values);
void write_cvol(const std::string& path, const Dims3& dims, const Spacing3& spacing,
                const std::uint8_t* values);

/// Loads an intensity volume and min-max normalizes it to [0,1].
/// A constant-valued payload maps to all zeros.
Volume load_volume(const std::string& path);

/// Writes the volume payload as f32 bit-exactly (no normalization).
void save_volume(const std::string& path, const Volume& v);

LabelMask load_label_mask(const std::string& path);
void save_label_mask(const std::string& path, const LabelMask& m);

// ---------------------------------------------------------------------------
// Resampling / resizing
// ---------------------------------------------------------------------------

enum class Interp { Trilinear, Nearest };

/// Resamples to the given physical spacing. Output dims are
/// round(dim * spacing / target) per axis, minimum 1. Voxel centers are
/// aligned index-proportionally: input index = out_index * (in-1)/(out-1).
Volume resample(const Volume& v, const Spacing3& target_spacing, Interp mode);
LabelMask resample(const LabelMask& m, const Spacing3& target_spacing);

/// Resizes to explicit output dims with the same center-alignment rule.
Volume resize(const Volume& v, const Dims3& target_dims, Interp mode);
LabelMask resize(const LabelMask& m, const Dims3& target_dims);

/// Output dims for the in-plane resize: first two axes go to (target1,
/// target2), the third scales by the geometric mean of the two in-plane
/// factors (rounded, min 1).
Dims3 inplane_resize_dims(const Dims3& dims, std::int64_t target1, std::int64_t target2);

// ---------------------------------------------------------------------------
// Patch tiling
// ---------------------------------------------------------------------------

struct PatchGrid {
  Dims3 patch_size{0, 0, 0};
  Dims3 stride{0, 0, 0};
  std::vector<Dims3> origins;  // corner coordinates, every voxel covered >= once
};

/// Tiles `shape` with patches of `patch_size` at the given overlap fraction
/// in [0,1). Boundary patches are clamped inward so every origin + patch fits.
PatchGrid make_patch_grid(const Dims3& shape, const Dims3& patch_size,
                          double overlap_fraction);

/// Multi-channel scalar map, C order: ((c*d1 + i)*d2 + j)*d3 + k.
struct ProbMap {
  std::int64_t channels = 0;
  Dims3 dims{0, 0, 0};
  std::vector<float> data;

  float& at(std::int64_t c, std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[((c * dims[0] + i) * dims[1] + j) * dims[2] + k];
  }
  float at(std::int64_t c, std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[((c * dims[0] + i) * dims[1] + j) * dims[2] + k];
  }
};

/// Averages overlapping patch outputs into a full-size map with uniform
/// weights. Throws std::logic_error when a voxel is covered by no patch.
ProbMap stitch(const std::vector<std::pair<Dims3, ProbMap>>& patch_outputs,
               const Dims3& shape);

// ---------------------------------------------------------------------------
// Padding / cropping (volumes smaller than a patch are zero-padded
// symmetrically and cropped back after stitching)
// ---------------------------------------------------------------------------

/// Offset of the original volume inside the padded one (floor of the split).
Dims3 pad_offset(const Dims3& from, const Dims3& to);

Volume pad_to(const Volume& v, const Dims3& target);
LabelMask pad_to(const LabelMask& m, const Dims3& target);

ProbMap crop(const ProbMap& m, const Dims3& offset, const Dims3& size);
Volume crop(const Volume& v, const Dims3& offset, const Dims3& size);
LabelMask crop(const LabelMask& m, const Dims3& offset, const Dims3& size);

}  // namespace crend
