#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crend/volume.hpp"

namespace crend {

/// Binary voxel mask on a spaced grid, C order.
struct BinaryMask {
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> data;

  std::uint8_t at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
};

// ---------------------------------------------------------------------------
// Overlap metrics (percent). Convention: both masks empty -> 100.
// ---------------------------------------------------------------------------
double dice(const BinaryMask& a, const BinaryMask& b);
double jaccard(const BinaryMask& a, const BinaryMask& b);

// ---------------------------------------------------------------------------
// Surface distances (mm). Boundaries are extracted with 6-connectivity
// (a foreground voxel with any face neighbor background or outside the
// volume); distances are Euclidean between boundary voxel centers with
// physical spacing. Undefined when either mask is empty -> nullopt.
// ---------------------------------------------------------------------------
struct SurfaceDistances {
  std::optional<double> hausdorff_mm;
  std::optional<double> avg_surface_dist_mm;
};
SurfaceDistances surface_distances(const BinaryMask& a, const BinaryMask& b);

// ---------------------------------------------------------------------------
// Instance analysis
// ---------------------------------------------------------------------------

/// 26-connectivity component labeling; labels are 1..count in first-visit order.
struct ComponentLabels {
  std::vector<std::int32_t> labels;  // 0 = background
  std::int32_t count = 0;
};
ComponentLabels connected_components(const BinaryMask& m);

struct DetectionResult {
  double fd_percent = 0.0;  // predicted components matched by no ground truth
  double md_percent = 0.0;  // ground-truth components matched by no prediction
  int pred_components = 0;
  int gt_components = 0;
  std::vector<int> false_detection_ids;  // predicted component labels
  std::vector<int> missed_detection_ids; // ground-truth component labels
};

/// A predicted component is a false detection when its IoU with every ground
/// truth component is <= iou_thresh; a ground-truth component is missed when
/// its IoU with every predicted component is <= iou_thresh.
DetectionResult detect_match(const BinaryMask& pred, const BinaryMask& gt,
                             double iou_thresh = 0.30);

/// Keeps component labels whose equivalent-sphere radius (3V/4pi)^(1/3) is
/// below radius_mm, with V = voxel count * voxel volume.
std::vector<int> small_components(const ComponentLabels& comps, const Spacing3& spacing,
                                  double radius_mm = 5.0);

int counting_error(const BinaryMask& pred, const BinaryMask& gt);

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct StructureMetrics {
  double dsc = 0.0;
  double jc = 0.0;
  std::optional<double> hd_mm;
  std::optional<double> asd_mm;
};

struct VolumeReport {
  std::string id;
  StructureMetrics follicle;
  StructureMetrics ovary;
  double fd = 0.0;
  double md = 0.0;
  double fd_small = 0.0;  // restricted to components with radius < 5 mm
  double md_small = 0.0;
  int count_error = 0;
};

struct Aggregate {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;  // values present (missing distances excluded)
};

struct DatasetReport {
  std::vector<VolumeReport> volumes;
  Aggregate follicle_dsc, follicle_jc, follicle_hd, follicle_asd;
  Aggregate ovary_dsc, ovary_jc, ovary_hd, ovary_asd;
  Aggregate fd, md, fd_small, md_small, count_error;
};

VolumeReport evaluate_volume(const std::string& id, const LabelMask& pred,
                             const LabelMask& gt, double iou_thresh = 0.30,
                             double small_radius_mm = 5.0);
DatasetReport aggregate_reports(std::vector<VolumeReport> volumes);

/// Per-volume CSV: one row per (volume, structure); instance columns are
/// filled on follicle rows only. Missing distances are empty cells.
void write_report_csv(const std::string& path, const DatasetReport& report);
void write_report_json(const std::string& path, const DatasetReport& report);
DatasetReport read_report_json(const std::string& path);

BinaryMask follicle_mask(const LabelMask& m);
BinaryMask ovary_mask(const LabelMask& m);

}  // namespace crend
