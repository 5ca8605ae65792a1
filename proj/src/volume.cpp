#include "crend/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "crend/errors.hpp"

namespace crend {

namespace {

using nlohmann::json;

void check_dims_spacing(const Dims3& dims, const Spacing3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) {
      throw std::invalid_argument("dims[" + std::to_string(a) + "] must be >= 1, got " +
                                  std::to_string(dims[a]));
    }
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw std::invalid_argument("spacing[" + std::to_string(a) + "] must be positive, got " +
                                  std::to_string(spacing[a]));
    }
  }
}

json read_header_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path + ": missing .cvol header line");
  }
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": header is not valid JSON: " + e.what());
  }
  for (const char* key : {"dims", "spacing", "dtype", "order"}) {
    if (!h.contains(key)) {
      throw FormatError(path + ": header missing key \"" + key + "\"");
    }
  }
  return h;
}

std::string header_string(const Dims3& dims, const Spacing3& spacing, const char* dtype) {
  json h;
  h["dims"] = {dims[0], dims[1], dims[2]};
  h["spacing"] = {spacing[0], spacing[1], spacing[2]};
  h["dtype"] = dtype;
  h["order"] = "C";
  return h.dump() + "\n";
}

void write_file(const std::string& path, const std::string& header, const void* payload,
                std::size_t nbytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(nbytes));
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Continuous source index for output index i under center alignment.
double source_index(std::int64_t i, std::int64_t n_out, std::int64_t n_in) {
  if (n_out <= 1) return (n_in - 1) / 2.0;
  return static_cast<double>(i) * static_cast<double>(n_in - 1) /
         static_cast<double>(n_out - 1);
}

template <typename T, typename Fetch>
inline double trilinear_fetch(const Dims3& in_dims, Fetch&& f, double x, double y, double z) {
  const auto clampi = [](std::int64_t v, std::int64_t hi) {
    return std::min(std::max<std::int64_t>(v, 0), hi);
  };
  const std::int64_t x0 = clampi(static_cast<std::int64_t>(std::floor(x)), in_dims[0] - 1);
  const std::int64_t y0 = clampi(static_cast<std::int64_t>(std::floor(y)), in_dims[1] - 1);
  const std::int64_t z0 = clampi(static_cast<std::int64_t>(std::floor(z)), in_dims[2] - 1);
  const std::int64_t x1 = clampi(x0 + 1, in_dims[0] - 1);
  const std::int64_t y1 = clampi(y0 + 1, in_dims[1] - 1);
  const std::int64_t z1 = clampi(z0 + 1, in_dims[2] - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double fz = z - static_cast<double>(z0);
  double acc = 0.0;
  for (int dx = 0; dx < 2; ++dx) {
    const double wx = dx ? fx : 1.0 - fx;
    if (wx == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? fy : 1.0 - fy;
      if (wy == 0.0) continue;
      for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? fz : 1.0 - fz;
        if (wz == 0.0) continue;
        acc += wx * wy * wz *
               static_cast<double>(f(dx ? x1 : x0, dy ? y1 : y0, dz ? z1 : z0));
      }
    }
  }
  return acc;
}

template <typename T, typename Fetch>
std::vector<T> resize_grid(const Dims3& in_dims, const Dims3& out_dims, Interp mode,
                           Fetch&& fetch) {
  std::vector<T> out(static_cast<std::size_t>(voxel_count(out_dims)));
  std::size_t idx = 0;
  for (std::int64_t i = 0; i < out_dims[0]; ++i) {
    const double x = source_index(i, out_dims[0], in_dims[0]);
    for (std::int64_t j = 0; j < out_dims[1]; ++j) {
      const double y = source_index(j, out_dims[1], in_dims[1]);
      for (std::int64_t k = 0; k < out_dims[2]; ++k, ++idx) {
        const double z = source_index(k, out_dims[2], in_dims[2]);
        if (mode == Interp::Nearest) {
          const std::int64_t xi = std::min<std::int64_t>(std::llround(x), in_dims[0] - 1);
          const std::int64_t yi = std::min<std::int64_t>(std::llround(y), in_dims[1] - 1);
          const std::int64_t zi = std::min<std::int64_t>(std::llround(z), in_dims[2] - 1);
          out[idx] = fetch(xi, yi, zi);
        } else {
          out[idx] = static_cast<T>(trilinear_fetch<T>(in_dims, fetch, x, y, z));
        }
      }
    }
  }
  return out;
}

Dims3 resampled_dims(const Dims3& dims, const Spacing3& spacing, const Spacing3& target) {
  Dims3 out{};
  for (int a = 0; a < 3; ++a) {
    if (!(target[a] > 0.0) || !std::isfinite(target[a])) {
      throw std::invalid_argument("target spacing must be positive, got " +
                                  std::to_string(target[a]) + " on axis " + std::to_string(a));
    }
    out[a] = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(dims[a]) * spacing[a] / target[a]));
  }
  return out;
}

}  // namespace

void Volume::validate() const {
  check_dims_spacing(dims, spacing);
  if (static_cast<std::int64_t>(data.size()) != voxel_count(dims)) {
    throw std::invalid_argument("volume data size " + std::to_string(data.size()) +
                                " does not match dims product " +
                                std::to_string(voxel_count(dims)));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("volume contains non-finite value");
  }
}

void LabelMask::validate() const {
  check_dims_spacing(dims, spacing);
  const auto n = static_cast<std::size_t>(voxel_count(dims));
  if (follicle.size() != n || ovary.size() != n) {
    throw std::invalid_argument("label mask channel size does not match dims");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (follicle[i] > 1 || ovary[i] > 1) {
      throw std::invalid_argument("label mask values must be in {0,1}");
    }
    if (follicle[i] && !ovary[i]) {
      throw std::invalid_argument("follicle mask escapes ovary mask at linear index " +
                                  std::to_string(i));
    }
  }
}

CvolRaw read_cvol(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  const json h = read_header_line(in, path);

  CvolRaw raw;
  try {
    const auto d = h.at("dims");
    const auto s = h.at("spacing");
    if (d.size() != 3 || s.size() != 3) throw FormatError(path + ": dims/spacing must have 3 entries");
    for (int a = 0; a < 3; ++a) {
      raw.dims[a] = d[a].get<std::int64_t>();
      raw.spacing[a] = s[a].get<double>();
    }
    const std::string dtype = h.at("dtype").get<std::string>();
    if (dtype == "f32") {
      raw.dtype = CvolDtype::F32;
    } else if (dtype == "u8") {
      raw.dtype = CvolDtype::U8;
    } else {
      throw FormatError(path + ": unknown dtype \"" + dtype + "\"");
    }
    if (h.at("order").get<std::string>() != "C") {
      throw FormatError(path + ": only C order is supported");
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header field: " + e.what());
  }
  try {
    check_dims_spacing(raw.dims, raw.spacing);
  } catch (const std::invalid_argument& e) {
    throw FormatError(path + ": " + e.what());
  }

  const std::int64_t n = voxel_count(raw.dims);
  const std::size_t elem = raw.dtype == CvolDtype::F32 ? 4 : 1;
  std::vector<char> payload(static_cast<std::size_t>(n) * elem);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw CorruptionError(path + ": payload truncated, expected " +
                          std::to_string(payload.size()) + " bytes, got " +
                          std::to_string(in.gcount()));
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw CorruptionError(path + ": trailing bytes after payload");
  }

  if (raw.dtype == CvolDtype::F32) {
    raw.f32.resize(static_cast<std::size_t>(n));
    std::memcpy(raw.f32.data(), payload.data(), payload.size());
  } else {
    raw.u8.assign(payload.begin(), payload.end());
  }
  return raw;
}

void write_cvol(const std::string& path, const Dims3& dims, const Spacing3& spacing,
                const float* values) {
  check_dims_spacing(dims, spacing);
  write_file(path, header_string(dims, spacing, "f32"), values,
             static_cast<std::size_t>(voxel_count(dims)) * sizeof(float));
}

void write_cvol(const std::string& path, const Dims3& dims, const Spacing3& spacing,
                const std::uint8_t* values) {
  check_dims_spacing(dims, spacing);
  write_file(path, header_string(dims, spacing, "u8"), values,
             static_cast<std::size_t>(voxel_count(dims)));
}

Volume load_volume(const std::string& path) {
  CvolRaw raw = read_cvol(path);
  Volume v;
  v.dims = raw.dims;
  v.spacing = raw.spacing;
  if (raw.dtype == CvolDtype::F32) {
    v.data = std::move(raw.f32);
  } else {
    v.data.assign(raw.u8.begin(), raw.u8.end());
  }
  for (float x : v.data) {
    if (!std::isfinite(x)) throw CorruptionError(path + ": non-finite intensity in payload");
  }
  const auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
  const float mn = v.data.empty() ? 0.f : *lo;
  const float mx = v.data.empty() ? 0.f : *hi;
  if (mx > mn) {
    const float scale = 1.0f / (mx - mn);
    for (float& x : v.data) x = (x - mn) * scale;
  } else {
    std::fill(v.data.begin(), v.data.end(), 0.0f);
  }
  return v;
}

void save_volume(const std::string& path, const Volume& v) {
  v.validate();
  write_cvol(path, v.dims, v.spacing, v.data.data());
}

LabelMask load_label_mask(const std::string& path) {
  CvolRaw raw = read_cvol(path);
  if (raw.dtype != CvolDtype::U8) {
    throw FormatError(path + ": label file must have dtype u8");
  }
  LabelMask m;
  m.dims = raw.dims;
  m.spacing = raw.spacing;
  m.follicle.resize(raw.u8.size());
  m.ovary.resize(raw.u8.size());
  for (std::size_t i = 0; i < raw.u8.size(); ++i) {
    const std::uint8_t v = raw.u8[i];
    if (v > 2) throw CorruptionError(path + ": label value " + std::to_string(v) + " outside {0,1,2}");
    m.follicle[i] = v == 2 ? 1 : 0;
    m.ovary[i] = v >= 1 ? 1 : 0;
  }
  return m;
}

void save_label_mask(const std::string& path, const LabelMask& m) {
  m.validate();
  std::vector<std::uint8_t> enc(m.follicle.size());
  for (std::size_t i = 0; i < enc.size(); ++i) {
    enc[i] = m.follicle[i] ? 2 : (m.ovary[i] ? 1 : 0);
  }
  write_cvol(path, m.dims, m.spacing, enc.data());
}

Volume resample(const Volume& v, const Spacing3& target_spacing, Interp mode) {
  const Dims3 out_dims = resampled_dims(v.dims, v.spacing, target_spacing);
  Volume out;
  out.dims = out_dims;
  out.spacing = target_spacing;
  out.data = resize_grid<float>(v.dims, out_dims, mode,
                                [&](std::int64_t i, std::int64_t j, std::int64_t k) {
                                  return v.at(i, j, k);
                                });
  return out;
}

LabelMask resample(const LabelMask& m, const Spacing3& target_spacing) {
  const Dims3 out_dims = resampled_dims(m.dims, m.spacing, target_spacing);
  return resize(m, out_dims);
}

Volume resize(const Volume& v, const Dims3& target_dims, Interp mode) {
  check_dims_spacing(target_dims, v.spacing);
  Volume out;
  out.dims = target_dims;
  for (int a = 0; a < 3; ++a) {
    out.spacing[a] = v.spacing[a] * static_cast<double>(v.dims[a]) /
                     static_cast<double>(target_dims[a]);
  }
  out.data = resize_grid<float>(v.dims, target_dims, mode,
                                [&](std::int64_t i, std::int64_t j, std::int64_t k) {
                                  return v.at(i, j, k);
                                });
  return out;
}

LabelMask resize(const LabelMask& m, const Dims3& target_dims) {
  check_dims_spacing(target_dims, m.spacing);
  LabelMask out;
  out.dims = target_dims;
  for (int a = 0; a < 3; ++a) {
    out.spacing[a] = m.spacing[a] * static_cast<double>(m.dims[a]) /
                     static_cast<double>(target_dims[a]);
  }
  out.follicle = resize_grid<std::uint8_t>(
      m.dims, target_dims, Interp::Nearest,
      [&](std::int64_t i, std::int64_t j, std::int64_t k) { return m.follicle_at(i, j, k); });
  out.ovary = resize_grid<std::uint8_t>(
      m.dims, target_dims, Interp::Nearest,
      [&](std::int64_t i, std::int64_t j, std::int64_t k) { return m.ovary_at(i, j, k); });
  return out;
}

Dims3 inplane_resize_dims(const Dims3& dims, std::int64_t target1, std::int64_t target2) {
  if (target1 < 1 || target2 < 1) {
    throw std::invalid_argument("in-plane targets must be >= 1");
  }
  const double f1 = static_cast<double>(target1) / static_cast<double>(dims[0]);
  const double f2 = static_cast<double>(target2) / static_cast<double>(dims[1]);
  const double f3 = std::sqrt(f1 * f2);
  return {target1, target2,
          std::max<std::int64_t>(1, std::llround(static_cast<double>(dims[2]) * f3))};
}

PatchGrid make_patch_grid(const Dims3& shape, const Dims3& patch_size,
                          double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("overlap_fraction must be in [0,1), got " +
                                std::to_string(overlap_fraction));
  }
  for (int a = 0; a < 3; ++a) {
    if (patch_size[a] < 1) throw std::invalid_argument("patch size must be >= 1");
    if (patch_size[a] > shape[a]) {
      throw std::invalid_argument("patch size " + std::to_string(patch_size[a]) +
                                  " exceeds shape " + std::to_string(shape[a]) + " on axis " +
                                  std::to_string(a) + " (pad the volume first)");
    }
  }

  PatchGrid grid;
  grid.patch_size = patch_size;
  std::array<std::vector<std::int64_t>, 3> axis_origins;
  for (int a = 0; a < 3; ++a) {
    const auto stride = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::floor(static_cast<double>(patch_size[a]) *
                                                (1.0 - overlap_fraction))));
    grid.stride[a] = stride;
    const std::int64_t last = shape[a] - patch_size[a];
    for (std::int64_t o = 0; o < last; o += stride) axis_origins[a].push_back(o);
    axis_origins[a].push_back(last);  // clamped boundary patch
  }
  for (std::int64_t i : axis_origins[0])
    for (std::int64_t j : axis_origins[1])
      for (std::int64_t k : axis_origins[2]) grid.origins.push_back({i, j, k});
  return grid;
}

ProbMap stitch(const std::vector<std::pair<Dims3, ProbMap>>& patch_outputs,
               const Dims3& shape) {
  if (patch_outputs.empty()) throw std::invalid_argument("stitch: no patches given");
  const std::int64_t channels = patch_outputs.front().second.channels;
  const std::int64_t n = voxel_count(shape);

  ProbMap out;
  out.channels = channels;
  out.dims = shape;
  out.data.assign(static_cast<std::size_t>(channels * n), 0.0f);
  std::vector<std::uint32_t> count(static_cast<std::size_t>(n), 0);

  for (const auto& [origin, patch] : patch_outputs) {
    if (patch.channels != channels) {
      throw std::invalid_argument("stitch: inconsistent channel counts");
    }
    const Dims3& p = patch.dims;
    for (int a = 0; a < 3; ++a) {
      if (origin[a] < 0 || origin[a] + p[a] > shape[a]) {
        throw std::invalid_argument("stitch: patch exceeds volume bounds on axis " +
                                    std::to_string(a));
      }
    }
    for (std::int64_t i = 0; i < p[0]; ++i) {
      for (std::int64_t j = 0; j < p[1]; ++j) {
        for (std::int64_t k = 0; k < p[2]; ++k) {
          const std::int64_t gi = origin[0] + i, gj = origin[1] + j, gk = origin[2] + k;
          const std::int64_t lin = (gi * shape[1] + gj) * shape[2] + gk;
          for (std::int64_t c = 0; c < channels; ++c) {
            out.data[static_cast<std::size_t>(c * n + lin)] += patch.at(c, i, j, k);
          }
          ++count[static_cast<std::size_t>(lin)];
        }
      }
    }
  }
  for (std::int64_t lin = 0; lin < n; ++lin) {
    const auto cnt = count[static_cast<std::size_t>(lin)];
    if (cnt == 0) {
      throw std::logic_error("stitch: voxel " + std::to_string(lin) +
                             " covered by no patch (grid contract violated)");
    }
    const float inv = 1.0f / static_cast<float>(cnt);
    for (std::int64_t c = 0; c < channels; ++c) {
      out.data[static_cast<std::size_t>(c * n + lin)] *= inv;
    }
  }
  return out;
}

Dims3 pad_offset(const Dims3& from, const Dims3& to) {
  Dims3 off{};
  for (int a = 0; a < 3; ++a) {
    if (to[a] < from[a]) throw std::invalid_argument("pad target smaller than source");
    off[a] = (to[a] - from[a]) / 2;
  }
  return off;
}

namespace {

template <typename T>
std::vector<T> pad_grid(const std::vector<T>& src, const Dims3& from, const Dims3& to,
                        const Dims3& off) {
  std::vector<T> out(static_cast<std::size_t>(voxel_count(to)), T{0});
  for (std::int64_t i = 0; i < from[0]; ++i)
    for (std::int64_t j = 0; j < from[1]; ++j)
      for (std::int64_t k = 0; k < from[2]; ++k)
        out[((i + off[0]) * to[1] + (j + off[1])) * to[2] + (k + off[2])] =
            src[(i * from[1] + j) * from[2] + k];
  return out;
}

template <typename T>
std::vector<T> crop_grid(const std::vector<T>& src, const Dims3& from, const Dims3& off,
                         const Dims3& size) {
  for (int a = 0; a < 3; ++a) {
    if (off[a] < 0 || off[a] + size[a] > from[a]) {
      throw std::invalid_argument("crop region outside source on axis " + std::to_string(a));
    }
  }
  std::vector<T> out(static_cast<std::size_t>(voxel_count(size)));
  std::size_t idx = 0;
  for (std::int64_t i = 0; i < size[0]; ++i)
    for (std::int64_t j = 0; j < size[1]; ++j)
      for (std::int64_t k = 0; k < size[2]; ++k, ++idx)
        out[idx] = src[((i + off[0]) * from[1] + (j + off[1])) * from[2] + (k + off[2])];
  return out;
}

}  // namespace

Volume pad_to(const Volume& v, const Dims3& target) {
  const Dims3 off = pad_offset(v.dims, target);
  Volume out;
  out.dims = target;
  out.spacing = v.spacing;
  out.data = pad_grid(v.data, v.dims, target, off);
  return out;
}

LabelMask pad_to(const LabelMask& m, const Dims3& target) {
  const Dims3 off = pad_offset(m.dims, target);
  LabelMask out;
  out.dims = target;
  out.spacing = m.spacing;
  out.follicle = pad_grid(m.follicle, m.dims, target, off);
  out.ovary = pad_grid(m.ovary, m.dims, target, off);
  return out;
}

ProbMap crop(const ProbMap& m, const Dims3& offset, const Dims3& size) {
  ProbMap out;
  out.channels = m.channels;
  out.dims = size;
  out.data.resize(static_cast<std::size_t>(m.channels * voxel_count(size)));
  const std::int64_t n_in = voxel_count(m.dims);
  const std::int64_t n_out = voxel_count(size);
  for (std::int64_t c = 0; c < m.channels; ++c) {
    const std::vector<float> channel(m.data.begin() + c * n_in,
                                     m.data.begin() + (c + 1) * n_in);
    const auto cropped = crop_grid(channel, m.dims, offset, size);
    std::copy(cropped.begin(), cropped.end(), out.data.begin() + c * n_out);
  }
  return out;
}

Volume crop(const Volume& v, const Dims3& offset, const Dims3& size) {
  Volume out;
  out.dims = size;
  out.spacing = v.spacing;
  out.data = crop_grid(v.data, v.dims, offset, size);
  return out;
}

LabelMask crop(const LabelMask& m, const Dims3& offset, const Dims3& size) {
  LabelMask out;
  out.dims = size;
  out.spacing = m.spacing;
  out.follicle = crop_grid(m.follicle, m.dims, offset, size);
  out.ovary = crop_grid(m.ovary, m.dims, offset, size);
  return out;
}

}  // namespace crend
