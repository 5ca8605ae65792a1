#include "crend/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "crend/errors.hpp"

namespace crend {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (a.dims != b.dims) {
    throw std::invalid_argument("mask shape mismatch: (" + std::to_string(a.dims[0]) + "," +
                                std::to_string(a.dims[1]) + "," + std::to_string(a.dims[2]) +
                                ") vs (" + std::to_string(b.dims[0]) + "," +
                                std::to_string(b.dims[1]) + "," + std::to_string(b.dims[2]) +
                                ")");
  }
}

std::int64_t count_fg(const BinaryMask& m) {
  std::int64_t c = 0;
  for (std::uint8_t v : m.data) c += v ? 1 : 0;
  return c;
}

// Boundary voxels under 6-connectivity; the outside of the volume counts as
// background, so edge voxels of the mask are boundary.
std::vector<std::uint8_t> boundary_voxels(const BinaryMask& m) {
  const Dims3& d = m.dims;
  std::vector<std::uint8_t> out(m.data.size(), 0);
  std::size_t idx = 0;
  for (std::int64_t i = 0; i < d[0]; ++i) {
    for (std::int64_t j = 0; j < d[1]; ++j) {
      for (std::int64_t k = 0; k < d[2]; ++k, ++idx) {
        if (!m.data[idx]) continue;
        const bool edge =
            i == 0 || i == d[0] - 1 || j == 0 || j == d[1] - 1 || k == 0 || k == d[2] - 1 ||
            !m.at(i - 1, j, k) || !m.at(i + 1, j, k) || !m.at(i, j - 1, k) ||
            !m.at(i, j + 1, k) || !m.at(i, j, k - 1) || !m.at(i, j, k + 1);
        if (edge) out[idx] = 1;
      }
    }
  }
  return out;
}

// 1D squared distance transform over parabolas (lower-envelope algorithm),
// sample positions x_i = w*i. Infinite inputs are skipped.
void dt1d(std::vector<double>& f, double w, std::vector<double>& scratch_z,
          std::vector<int>& scratch_v, std::vector<double>& scratch_d) {
  const int n = static_cast<int>(f.size());
  auto& z = scratch_z;
  auto& v = scratch_v;
  auto& d = scratch_d;
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  v.assign(static_cast<std::size_t>(n), 0);
  d.assign(static_cast<std::size_t>(n), kInf);

  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == kInf) continue;
    const double xq = w * q;
    double s;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double xp = w * p;
      s = ((f[static_cast<std::size_t>(q)] + xq * xq) -
           (f[static_cast<std::size_t>(p)] + xp * xp)) /
          (2.0 * xq - 2.0 * xp);
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    } else {
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
      z[static_cast<std::size_t>(k) + 1] = kInf;
    }
  }
  if (k < 0) return;  // no finite sources on this line

  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = w * q;
    while (z[static_cast<std::size_t>(j) + 1] < xq) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double dx = xq - w * p;
    d[static_cast<std::size_t>(q)] = f[static_cast<std::size_t>(p)] + dx * dx;
  }
  f = d;
}

// Exact squared Euclidean distance (mm^2) to the set of source voxels.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& sources, const Dims3& d,
                                const Spacing3& spacing) {
  std::vector<double> sq(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) sq[i] = sources[i] ? 0.0 : kInf;

  const std::int64_t strides[3] = {d[1] * d[2], d[2], 1};
  std::vector<double> line, z, dist;
  std::vector<int> v;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    line.resize(static_cast<std::size_t>(d[axis]));
    for (std::int64_t u = 0; u < d[a1]; ++u) {
      for (std::int64_t w = 0; w < d[a2]; ++w) {
        const std::int64_t base = u * strides[a1] + w * strides[a2];
        for (std::int64_t t = 0; t < d[axis]; ++t) {
          line[static_cast<std::size_t>(t)] = sq[static_cast<std::size_t>(base + t * strides[axis])];
        }
        dt1d(line, spacing[axis], z, v, dist);
        for (std::int64_t t = 0; t < d[axis]; ++t) {
          sq[static_cast<std::size_t>(base + t * strides[axis])] = line[static_cast<std::size_t>(t)];
        }
      }
    }
  }
  return sq;
}

struct DirectedStats {
  double max = 0.0;
  double mean = 0.0;
};

DirectedStats directed_surface_stats(const std::vector<std::uint8_t>& from_boundary,
                                     const std::vector<double>& to_sq_edt) {
  DirectedStats s;
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < from_boundary.size(); ++i) {
    if (!from_boundary[i]) continue;
    const double dist = std::sqrt(to_sq_edt[i]);
    s.max = std::max(s.max, dist);
    sum += dist;
    ++n;
  }
  s.mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return s;
}

json aggregate_json(const Aggregate& a) {
  return json{{"mean", a.mean}, {"sd", a.sd}, {"n", a.n}};
}

Aggregate aggregate_from_json(const json& j) {
  Aggregate a;
  a.mean = j.at("mean").get<double>();
  a.sd = j.at("sd").get<double>();
  a.n = j.at("n").get<int>();
  return a;
}

Aggregate make_aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = static_cast<int>(values.size());
  if (a.n == 0) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / a.n;
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.sd = std::sqrt(var / a.n);  // population convention
  return a;
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
  check_same_shape(a, b);
  std::int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool va = a.data[i] != 0, vb = b.data[i] != 0;
    inter += (va && vb) ? 1 : 0;
    na += va ? 1 : 0;
    nb += vb ? 1 : 0;
  }
  if (na + nb == 0) return 100.0;  // both empty
  return 200.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  check_same_shape(a, b);
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool va = a.data[i] != 0, vb = b.data[i] != 0;
    inter += (va && vb) ? 1 : 0;
    uni += (va || vb) ? 1 : 0;
  }
  if (uni == 0) return 100.0;  // both empty
  return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

SurfaceDistances surface_distances(const BinaryMask& a, const BinaryMask& b) {
  check_same_shape(a, b);
  SurfaceDistances out;
  if (count_fg(a) == 0 || count_fg(b) == 0) return out;  // flagged missing

  const auto ba = boundary_voxels(a);
  const auto bb = boundary_voxels(b);
  const auto sq_to_b = squared_edt(bb, a.dims, a.spacing);
  const auto sq_to_a = squared_edt(ba, a.dims, a.spacing);

  const DirectedStats ab = directed_surface_stats(ba, sq_to_b);
  const DirectedStats ba_stats = directed_surface_stats(bb, sq_to_a);

  out.hausdorff_mm = std::max(ab.max, ba_stats.max);
  out.avg_surface_dist_mm = 0.5 * (ab.mean + ba_stats.mean);
  return out;
}

ComponentLabels connected_components(const BinaryMask& m) {
  const Dims3& d = m.dims;
  ComponentLabels out;
  out.labels.assign(m.data.size(), 0);
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < static_cast<std::int64_t>(m.data.size()); ++start) {
    if (!m.data[static_cast<std::size_t>(start)] || out.labels[static_cast<std::size_t>(start)])
      continue;
    const std::int32_t label = ++out.count;
    out.labels[static_cast<std::size_t>(start)] = label;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      const std::int64_t ci = cur / (d[1] * d[2]);
      const std::int64_t cj = (cur / d[2]) % d[1];
      const std::int64_t ck = cur % d[2];
      for (std::int64_t di = -1; di <= 1; ++di) {
        for (std::int64_t dj = -1; dj <= 1; ++dj) {
          for (std::int64_t dk = -1; dk <= 1; ++dk) {
            const std::int64_t ni = ci + di, nj = cj + dj, nk = ck + dk;
            if (ni < 0 || nj < 0 || nk < 0 || ni >= d[0] || nj >= d[1] || nk >= d[2]) continue;
            const auto lin = static_cast<std::size_t>((ni * d[1] + nj) * d[2] + nk);
            if (m.data[lin] && !out.labels[lin]) {
              out.labels[lin] = label;
              stack.push_back(static_cast<std::int64_t>(lin));
            }
          }
        }
      }
    }
  }
  return out;
}

DetectionResult detect_match(const BinaryMask& pred, const BinaryMask& gt, double iou_thresh) {
  check_same_shape(pred, gt);
  const ComponentLabels cp = connected_components(pred);
  const ComponentLabels cg = connected_components(gt);

  std::vector<std::int64_t> size_p(static_cast<std::size_t>(cp.count) + 1, 0);
  std::vector<std::int64_t> size_g(static_cast<std::size_t>(cg.count) + 1, 0);
  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> overlap;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const std::int32_t lp = cp.labels[i];
    const std::int32_t lg = cg.labels[i];
    if (lp) ++size_p[static_cast<std::size_t>(lp)];
    if (lg) ++size_g[static_cast<std::size_t>(lg)];
    if (lp && lg) ++overlap[{lp, lg}];
  }

  std::vector<double> best_iou_p(static_cast<std::size_t>(cp.count) + 1, 0.0);
  std::vector<double> best_iou_g(static_cast<std::size_t>(cg.count) + 1, 0.0);
  for (const auto& [key, inter] : overlap) {
    const auto [lp, lg] = key;
    const double uni = static_cast<double>(size_p[static_cast<std::size_t>(lp)] +
                                           size_g[static_cast<std::size_t>(lg)] - inter);
    const double iou = static_cast<double>(inter) / uni;
    best_iou_p[static_cast<std::size_t>(lp)] = std::max(best_iou_p[static_cast<std::size_t>(lp)], iou);
    best_iou_g[static_cast<std::size_t>(lg)] = std::max(best_iou_g[static_cast<std::size_t>(lg)], iou);
  }

  DetectionResult r;
  r.pred_components = cp.count;
  r.gt_components = cg.count;
  for (std::int32_t l = 1; l <= cp.count; ++l) {
    if (best_iou_p[static_cast<std::size_t>(l)] <= iou_thresh) r.false_detection_ids.push_back(l);
  }
  for (std::int32_t l = 1; l <= cg.count; ++l) {
    if (best_iou_g[static_cast<std::size_t>(l)] <= iou_thresh) r.missed_detection_ids.push_back(l);
  }
  r.fd_percent = cp.count > 0
                     ? 100.0 * static_cast<double>(r.false_detection_ids.size()) / cp.count
                     : 0.0;
  r.md_percent = cg.count > 0
                     ? 100.0 * static_cast<double>(r.missed_detection_ids.size()) / cg.count
                     : 0.0;
  return r;
}

std::vector<int> small_components(const ComponentLabels& comps, const Spacing3& spacing,
                                  double radius_mm) {
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(comps.count) + 1, 0);
  for (std::int32_t l : comps.labels) {
    if (l) ++sizes[static_cast<std::size_t>(l)];
  }
  const double voxel_volume = spacing[0] * spacing[1] * spacing[2];
  std::vector<int> kept;
  for (std::int32_t l = 1; l <= comps.count; ++l) {
    const double volume = static_cast<double>(sizes[static_cast<std::size_t>(l)]) * voxel_volume;
    const double r = std::cbrt(3.0 * volume / (4.0 * M_PI));
    if (r < radius_mm) kept.push_back(l);
  }
  return kept;
}

int counting_error(const BinaryMask& pred, const BinaryMask& gt) {
  check_same_shape(pred, gt);
  return std::abs(connected_components(pred).count - connected_components(gt).count);
}

BinaryMask follicle_mask(const LabelMask& m) {
  return BinaryMask{m.dims, m.spacing, m.follicle};
}

BinaryMask ovary_mask(const LabelMask& m) {
  return BinaryMask{m.dims, m.spacing, m.ovary};
}

VolumeReport evaluate_volume(const std::string& id, const LabelMask& pred, const LabelMask& gt,
                             double iou_thresh, double small_radius_mm) {
  if (pred.dims != gt.dims) throw std::invalid_argument("evaluate_volume: shape mismatch");
  VolumeReport r;
  r.id = id;

  const auto eval_structure = [&](const BinaryMask& p, const BinaryMask& g) {
    StructureMetrics s;
    s.dsc = dice(p, g);
    s.jc = jaccard(p, g);
    const SurfaceDistances sd = surface_distances(p, g);
    s.hd_mm = sd.hausdorff_mm;
    s.asd_mm = sd.avg_surface_dist_mm;
    return s;
  };
  const BinaryMask pf = follicle_mask(pred), gf = follicle_mask(gt);
  r.follicle = eval_structure(pf, gf);
  r.ovary = eval_structure(ovary_mask(pred), ovary_mask(gt));

  const DetectionResult det = detect_match(pf, gf, iou_thresh);
  r.fd = det.fd_percent;
  r.md = det.md_percent;

  // Small-follicle stratum: rate among components below the radius cutoff.
  const ComponentLabels cp = connected_components(pf);
  const ComponentLabels cg = connected_components(gf);
  const std::vector<int> small_p = small_components(cp, pred.spacing, small_radius_mm);
  const std::vector<int> small_g = small_components(cg, gt.spacing, small_radius_mm);
  const auto count_in = [](const std::vector<int>& ids, const std::vector<int>& subset) {
    int c = 0;
    for (int id : ids) {
      if (std::find(subset.begin(), subset.end(), id) != subset.end()) ++c;
    }
    return c;
  };
  r.fd_small = small_p.empty() ? 0.0
                               : 100.0 * count_in(det.false_detection_ids, small_p) /
                                     static_cast<double>(small_p.size());
  r.md_small = small_g.empty() ? 0.0
                               : 100.0 * count_in(det.missed_detection_ids, small_g) /
                                     static_cast<double>(small_g.size());
  r.count_error = std::abs(det.pred_components - det.gt_components);
  return r;
}

DatasetReport aggregate_reports(std::vector<VolumeReport> volumes) {
  DatasetReport rep;
  rep.volumes = std::move(volumes);

  std::vector<double> f_dsc, f_jc, f_hd, f_asd, o_dsc, o_jc, o_hd, o_asd;
  std::vector<double> fd, md, fd_small, md_small, cnt;
  for (const VolumeReport& v : rep.volumes) {
    f_dsc.push_back(v.follicle.dsc);
    f_jc.push_back(v.follicle.jc);
    if (v.follicle.hd_mm) f_hd.push_back(*v.follicle.hd_mm);
    if (v.follicle.asd_mm) f_asd.push_back(*v.follicle.asd_mm);
    o_dsc.push_back(v.ovary.dsc);
    o_jc.push_back(v.ovary.jc);
    if (v.ovary.hd_mm) o_hd.push_back(*v.ovary.hd_mm);
    if (v.ovary.asd_mm) o_asd.push_back(*v.ovary.asd_mm);
    fd.push_back(v.fd);
    md.push_back(v.md);
    fd_small.push_back(v.fd_small);
    md_small.push_back(v.md_small);
    cnt.push_back(static_cast<double>(v.count_error));
  }
  rep.follicle_dsc = make_aggregate(f_dsc);
  rep.follicle_jc = make_aggregate(f_jc);
  rep.follicle_hd = make_aggregate(f_hd);
  rep.follicle_asd = make_aggregate(f_asd);
  rep.ovary_dsc = make_aggregate(o_dsc);
  rep.ovary_jc = make_aggregate(o_jc);
  rep.ovary_hd = make_aggregate(o_hd);
  rep.ovary_asd = make_aggregate(o_asd);
  rep.fd = make_aggregate(fd);
  rep.md = make_aggregate(md);
  rep.fd_small = make_aggregate(fd_small);
  rep.md_small = make_aggregate(md_small);
  rep.count_error = make_aggregate(cnt);
  return rep;
}

void write_report_csv(const std::string& path, const DatasetReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  out << "volume,structure,dsc,jc,hd,asd,fd,md,fd_small,md_small,count_error\n";
  const auto cell = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const VolumeReport& v : report.volumes) {
    out << v.id << ",follicle," << v.follicle.dsc << "," << v.follicle.jc << ","
        << cell(v.follicle.hd_mm) << "," << cell(v.follicle.asd_mm) << "," << v.fd << ","
        << v.md << "," << v.fd_small << "," << v.md_small << "," << v.count_error << "\n";
    out << v.id << ",ovary," << v.ovary.dsc << "," << v.ovary.jc << "," << cell(v.ovary.hd_mm)
        << "," << cell(v.ovary.asd_mm) << ",,,,,\n";
  }
}

namespace {

json structure_json(const StructureMetrics& s) {
  json j;
  j["dsc"] = s.dsc;
  j["jc"] = s.jc;
  j["hd"] = s.hd_mm ? json(*s.hd_mm) : json(nullptr);
  j["asd"] = s.asd_mm ? json(*s.asd_mm) : json(nullptr);
  return j;
}

StructureMetrics structure_from_json(const json& j) {
  StructureMetrics s;
  s.dsc = j.at("dsc").get<double>();
  s.jc = j.at("jc").get<double>();
  if (!j.at("hd").is_null()) s.hd_mm = j.at("hd").get<double>();
  if (!j.at("asd").is_null()) s.asd_mm = j.at("asd").get<double>();
  return s;
}

}  // namespace

void write_report_json(const std::string& path, const DatasetReport& report) {
  json j;
  j["conventions"] = {{"both_empty_overlap_percent", 100.0},
                      {"empty_mask_distances", nullptr},
                      {"iou_threshold", 0.30},
                      {"small_radius_mm", 5.0}};
  j["volumes"] = json::array();
  for (const VolumeReport& v : report.volumes) {
    j["volumes"].push_back({{"id", v.id},
                            {"follicle", structure_json(v.follicle)},
                            {"ovary", structure_json(v.ovary)},
                            {"fd", v.fd},
                            {"md", v.md},
                            {"fd_small", v.fd_small},
                            {"md_small", v.md_small},
                            {"count_error", v.count_error}});
  }
  j["aggregates"] = {
      {"follicle",
       {{"dsc", aggregate_json(report.follicle_dsc)},
        {"jc", aggregate_json(report.follicle_jc)},
        {"hd", aggregate_json(report.follicle_hd)},
        {"asd", aggregate_json(report.follicle_asd)}}},
      {"ovary",
       {{"dsc", aggregate_json(report.ovary_dsc)},
        {"jc", aggregate_json(report.ovary_jc)},
        {"hd", aggregate_json(report.ovary_hd)},
        {"asd", aggregate_json(report.ovary_asd)}}},
      {"detection",
       {{"fd", aggregate_json(report.fd)},
        {"md", aggregate_json(report.md)},
        {"fd_small", aggregate_json(report.fd_small)},
        {"md_small", aggregate_json(report.md_small)},
        {"count_error", aggregate_json(report.count_error)}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

DatasetReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  DatasetReport rep;
  try {
    for (const auto& e : j.at("volumes")) {
      VolumeReport v;
      v.id = e.at("id").get<std::string>();
      v.follicle = structure_from_json(e.at("follicle"));
      v.ovary = structure_from_json(e.at("ovary"));
      v.fd = e.at("fd").get<double>();
      v.md = e.at("md").get<double>();
      v.fd_small = e.at("fd_small").get<double>();
      v.md_small = e.at("md_small").get<double>();
      v.count_error = e.at("count_error").get<int>();
      rep.volumes.push_back(std::move(v));
    }
    const auto& agg = j.at("aggregates");
    rep.follicle_dsc = aggregate_from_json(agg.at("follicle").at("dsc"));
    rep.follicle_jc = aggregate_from_json(agg.at("follicle").at("jc"));
    rep.follicle_hd = aggregate_from_json(agg.at("follicle").at("hd"));
    rep.follicle_asd = aggregate_from_json(agg.at("follicle").at("asd"));
    rep.ovary_dsc = aggregate_from_json(agg.at("ovary").at("dsc"));
    rep.ovary_jc = aggregate_from_json(agg.at("ovary").at("jc"));
    rep.ovary_hd = aggregate_from_json(agg.at("ovary").at("hd"));
    rep.ovary_asd = aggregate_from_json(agg.at("ovary").at("asd"));
    rep.fd = aggregate_from_json(agg.at("detection").at("fd"));
    rep.md = aggregate_from_json(agg.at("detection").at("md"));
    rep.fd_small = aggregate_from_json(agg.at("detection").at("fd_small"));
    rep.md_small = aggregate_from_json(agg.at("detection").at("md_small"));
    rep.count_error = aggregate_from_json(agg.at("detection").at("count_error"));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad report field: " + e.what());
  }
  return rep;
}

}  // namespace crend
