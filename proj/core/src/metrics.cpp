#include "descatter3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include "descatter3d/errors.hpp"

namespace descatter3d {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

double dist_point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = sub(b, a);
  const double ab2 = dot(ab, ab);
  double t = ab2 > 0.0 ? dot(sub(p, a), ab) / ab2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(sub(p, add(a, scale(ab, t))));
}

double dist_xy_segment(double px, double py, const Vec3& a, const Vec3& b) {
  const double abx = b[0] - a[0], aby = b[1] - a[1];
  const double ab2 = abx * abx + aby * aby;
  double t = ab2 > 0.0 ? ((px - a[0]) * abx + (py - a[1]) * aby) / ab2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a[0] + t * abx), dy = py - (a[1] + t * aby);
  return std::sqrt(dx * dx + dy * dy);
}

/// Clamped trilinear sample at a micrometer point in volume-local coords.
double sample_trilinear(const Volume& vol, const Vec3& p_um) {
  auto axis = [&](double v, int a) {
    const double f = v / vol.pitch[a];
    return std::clamp(f, 0.0, static_cast<double>(vol.dims[a] - 1));
  };
  const double fx = axis(p_um[0], 0), fy = axis(p_um[1], 1), fz = axis(p_um[2], 2);
  const int x0 = std::min(static_cast<int>(fx), vol.dims[0] - 1);
  const int y0 = std::min(static_cast<int>(fy), vol.dims[1] - 1);
  const int z0 = std::min(static_cast<int>(fz), vol.dims[2] - 1);
  const int x1 = std::min(x0 + 1, vol.dims[0] - 1);
  const int y1 = std::min(y0 + 1, vol.dims[1] - 1);
  const int z1 = std::min(z0 + 1, vol.dims[2] - 1);
  const double tx = fx - x0, ty = fy - y0, tz = fz - z0;

  const double c00 = vol.at(x0, y0, z0) + (vol.at(x1, y0, z0) - vol.at(x0, y0, z0)) * tx;
  const double c10 = vol.at(x0, y1, z0) + (vol.at(x1, y1, z0) - vol.at(x0, y1, z0)) * tx;
  const double c01 = vol.at(x0, y0, z1) + (vol.at(x1, y0, z1) - vol.at(x0, y0, z1)) * tx;
  const double c11 = vol.at(x0, y1, z1) + (vol.at(x1, y1, z1) - vol.at(x0, y1, z1)) * tx;
  const double c0 = c00 + (c10 - c00) * ty;
  const double c1 = c01 + (c11 - c01) * ty;
  return c0 + (c1 - c0) * tz;
}

double median_of(std::vector<float>& vals) {
  if (vals.empty()) return 0.0;
  const std::size_t mid = vals.size() / 2;
  std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
  double m = vals[mid];
  if (vals.size() % 2 == 0) {
    const auto lower = std::max_element(vals.begin(), vals.begin() + mid);
    m = 0.5 * (m + *lower);
  }
  return m;
}

/// Signed distance to the nearest structure surface per voxel: negative
/// inside a tube. Computed once per (geometry, grid) pair.
struct StructureFields {
  std::vector<float> shaft_surface;  // dist to nearest dendrite axis minus its radius
  std::vector<int> shaft_id;
  std::vector<float> spine_surface;  // dist to nearest spine segment minus its radius
};

StructureFields compute_structure_fields(const Volume& grid, const AnnotationSet& ann) {
  StructureFields f;
  const std::size_t n = grid.size();
  f.shaft_surface.assign(n, std::numeric_limits<float>::infinity());
  f.shaft_id.assign(n, -1);
  f.spine_surface.assign(n, std::numeric_limits<float>::infinity());

  const double dx = grid.pitch[0], dy = grid.pitch[1], dz = grid.pitch[2];
  std::size_t idx = 0;
  for (int z = 0; z < grid.dims[2]; ++z) {
    for (int y = 0; y < grid.dims[1]; ++y) {
      for (int x = 0; x < grid.dims[0]; ++x, ++idx) {
        const Vec3 p{x * dx, y * dy, z * dz};
        for (const DendriteRecord& d : ann.dendrites) {
          const double dist =
              std::sqrt(dist2_point_polyline(p, d.path)) - d.radius_um;
          if (dist < f.shaft_surface[idx]) {
            f.shaft_surface[idx] = static_cast<float>(dist);
            f.shaft_id[idx] = d.id;
          }
        }
        for (const SpineRecord& s : ann.spines) {
          const double dist = dist_point_segment(p, s.attachment, s.tip) - s.radius_um;
          f.spine_surface[idx] = std::min(f.spine_surface[idx], static_cast<float>(dist));
        }
      }
    }
  }
  return f;
}

double positive_p99_or_zero(const Volume& vol) {
  try {
    return positive_percentile(vol, 99.0);
  } catch (const DegenerateVolume&) {
    return 0.0;
  }
}

}  // namespace

void SpineCriteria::validate() const {
  if (!(min_protrusion_um > 0.0)) throw InvalidDims("SpineCriteria: min_protrusion must be > 0");
  if (min_consecutive_planes < 1) throw InvalidDims("SpineCriteria: planes must be >= 1");
  if (!(contrast_ratio > 1.0)) throw InvalidDims("SpineCriteria: contrast_ratio must be > 1");
  if (!(annulus_inner_um > 0.0 && annulus_outer_um > annulus_inner_um)) {
    throw InvalidDims("SpineCriteria: annulus radii must satisfy 0 < inner < outer");
  }
  if (!(min_prominence >= 0.0 && min_prominence < 1.0)) {
    throw InvalidDims("SpineCriteria: min_prominence must be in [0, 1)");
  }
}

std::string format_percent(std::size_t visible, std::size_t total) {
  const double pct = total == 0 ? 0.0 : 100.0 * static_cast<double>(visible) /
                                            static_cast<double>(total);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", pct);
  return buf;
}

RecallReport spine_visibility(const Volume& vol, const AnnotationSet& ann,
                              const SpineCriteria& crit) {
  crit.validate();
  vol.validate();
  const double dx = vol.pitch[0], dy = vol.pitch[1], dz = vol.pitch[2];
  const std::array<double, 3> ext{(vol.dims[0] - 1) * dx, (vol.dims[1] - 1) * dy,
                                  (vol.dims[2] - 1) * dz};
  for (const SpineRecord& s : ann.spines) {
    for (int a = 0; a < 3; ++a) {
      if (s.attachment[a] < -1e-9 || s.attachment[a] > ext[a] + 1e-9 || s.tip[a] < -1e-9 ||
          s.tip[a] > ext[a] + 1e-9) {
        throw InvalidAnnotation("spine_visibility: spine " + std::to_string(s.id) +
                                " lies outside the volume");
      }
    }
  }

  const double floor_value = crit.min_prominence * positive_p99_or_zero(vol);
  const StructureFields fields = compute_structure_fields(vol, ann);

  RecallReport report;
  report.total = ann.spines.size();

  constexpr int kTailSamples = 33;
  for (const SpineRecord& s : ann.spines) {
    SpineVerdict verdict;
    verdict.id = s.id;

    const double len = norm(sub(s.tip, s.attachment));
    const double t0 = len > 0.0 ? std::min(crit.min_protrusion_um / len, 1.0) : 1.0;
    const Vec3 tail_a = add(s.attachment, scale(sub(s.tip, s.attachment), t0));
    const Vec3 tail_b = s.tip;

    std::vector<Vec3> samples(kTailSamples);
    for (int i = 0; i < kTailSamples; ++i) {
      const double t = kTailSamples == 1 ? 0.0 : static_cast<double>(i) / (kTailSamples - 1);
      samples[i] = add(tail_a, scale(sub(tail_b, tail_a), t));
    }

    const double zlo = std::min(tail_a[2], tail_b[2]);
    const double zhi = std::max(tail_a[2], tail_b[2]);
    int k0 = static_cast<int>(std::ceil(zlo / dz - 1e-9));
    int k1 = static_cast<int>(std::floor(zhi / dz + 1e-9));
    k0 = std::max(k0, 0);
    k1 = std::min(k1, vol.dims[2] - 1);
    if (k0 > k1) {
      // The scored portion stays between plane depths; fall back to the
      // nearest plane so in-plane spines still get a single-plane check.
      const int k = std::clamp(static_cast<int>(std::lround(0.5 * (zlo + zhi) / dz)), 0,
                               vol.dims[2] - 1);
      k0 = k1 = k;
    }

    int run = 0;
    for (int k = k0; k <= k1; ++k) {
      const double plane_z = k * dz;
      double mean = 0.0;
      int count = 0;
      for (const Vec3& p : samples) {
        if (std::fabs(p[2] - plane_z) <= 0.5 * dz + 1e-9) {
          mean += sample_trilinear(vol, p);
          ++count;
        }
      }
      if (count == 0) {
        // Nearest sample stands in when the discretized tail skips a plane.
        double best = std::numeric_limits<double>::infinity();
        const Vec3* pick = &samples[0];
        for (const Vec3& p : samples) {
          const double d = std::fabs(p[2] - plane_z);
          if (d < best) {
            best = d;
            pick = &p;
          }
        }
        mean = sample_trilinear(vol, *pick);
        count = 1;
      } else {
        mean /= count;
      }

      // Median of the annular background in this plane, structures excluded.
      const double pad = crit.annulus_outer_um;
      const double xlo = std::min(tail_a[0], tail_b[0]) - pad;
      const double xhi = std::max(tail_a[0], tail_b[0]) + pad;
      const double ylo = std::min(tail_a[1], tail_b[1]) - pad;
      const double yhi = std::max(tail_a[1], tail_b[1]) + pad;
      const int ix0 = std::max(0, static_cast<int>(std::floor(xlo / dx)));
      const int ix1 = std::min(vol.dims[0] - 1, static_cast<int>(std::ceil(xhi / dx)));
      const int iy0 = std::max(0, static_cast<int>(std::floor(ylo / dy)));
      const int iy1 = std::min(vol.dims[1] - 1, static_cast<int>(std::ceil(yhi / dy)));

      std::vector<float> bg;
      for (int iy = iy0; iy <= iy1; ++iy) {
        for (int ix = ix0; ix <= ix1; ++ix) {
          const double d_xy = dist_xy_segment(ix * dx, iy * dy, tail_a, tail_b);
          if (d_xy < crit.annulus_inner_um || d_xy > crit.annulus_outer_um) continue;
          const std::size_t vi = vol.index(ix, iy, k);
          if (fields.shaft_surface[vi] <= 0.5f) continue;
          if (fields.spine_surface[vi] <= 0.5f) continue;
          bg.push_back(vol.data[vi]);
        }
      }
      const double background = median_of(bg);

      const bool pass = mean > crit.contrast_ratio * background && mean >= floor_value &&
                        mean > 0.0;
      const double ratio = background > 0.0 ? mean / background
                                            : (mean > 0.0 ? std::numeric_limits<double>::max()
                                                          : 0.0);
      verdict.contrast = std::max(verdict.contrast, ratio);
      run = pass ? run + 1 : 0;
      verdict.planes_passed = std::max(verdict.planes_passed, run);
    }

    verdict.visible = verdict.planes_passed >= crit.min_consecutive_planes;
    report.verdicts.push_back(verdict);
    if (verdict.visible) ++report.visible;
  }

  report.recall = report.total == 0
                      ? 0.0
                      : static_cast<double>(report.visible) / static_cast<double>(report.total);
  return report;
}

std::vector<double> intensity_profile(const Volume& vol, const std::vector<Vec3>& polyline_um,
                                      double half_width_um, int n_samples) {
  if (n_samples < 2) throw InvalidProfile("intensity_profile: n_samples must be >= 2");
  if (!(half_width_um >= 0.0)) throw InvalidProfile("intensity_profile: half_width must be >= 0");

  std::vector<Vec3> pts;
  for (const Vec3& p : polyline_um) {
    if (pts.empty() || norm(sub(p, pts.back())) > 1e-12) pts.push_back(p);
  }
  if (pts.size() < 2) {
    throw InvalidProfile("intensity_profile: polyline needs >= 2 distinct points");
  }
  const std::array<double, 3> ext{(vol.dims[0] - 1) * static_cast<double>(vol.pitch[0]),
                                  (vol.dims[1] - 1) * static_cast<double>(vol.pitch[1]),
                                  (vol.dims[2] - 1) * static_cast<double>(vol.pitch[2])};
  for (const Vec3& p : pts) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < -1e-9 || p[a] > ext[a] + 1e-9) {
        throw InvalidProfile("intensity_profile: polyline leaves the volume");
      }
    }
  }

  std::vector<double> cum{0.0};
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    cum.push_back(cum.back() + norm(sub(pts[i + 1], pts[i])));
  }
  const double total = cum.back();

  const double min_xy_pitch = std::min(vol.pitch[0], vol.pitch[1]);
  const int n_off = half_width_um > 0.0
                        ? 2 * static_cast<int>(std::ceil(half_width_um / (0.5 * min_xy_pitch))) + 1
                        : 1;

  std::vector<double> profile(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double s = total * static_cast<double>(i) / (n_samples - 1);
    std::size_t seg = 0;
    while (seg + 2 < cum.size() && cum[seg + 1] < s) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
    const Vec3 p = add(pts[seg], scale(sub(pts[seg + 1], pts[seg]), t));

    Vec3 tangent = sub(pts[seg + 1], pts[seg]);
    const double txy = std::hypot(tangent[0], tangent[1]);
    Vec3 normal = txy > 1e-12 ? Vec3{-tangent[1] / txy, tangent[0] / txy, 0.0}
                              : Vec3{1.0, 0.0, 0.0};

    double acc = 0.0;
    for (int o = 0; o < n_off; ++o) {
      const double w =
          n_off == 1 ? 0.0 : -half_width_um + 2.0 * half_width_um * o / (n_off - 1);
      Vec3 q = add(p, scale(normal, w));
      for (int a = 0; a < 3; ++a) q[a] = std::clamp(q[a], 0.0, ext[a]);
      acc += sample_trilinear(vol, q);
    }
    profile[i] = acc / n_off;
  }

  const double peak = *std::max_element(profile.begin(), profile.end());
  if (peak > 0.0) {
    for (double& v : profile) v /= peak;
  }
  return profile;
}

Fidelity fidelity(const Volume& pred, const Volume& ref) {
  if (pred.dims != ref.dims) throw ShapeError("fidelity: volume dims differ");
  double acc = 0.0;
  float lo = ref.data.empty() ? 0.f : ref.data[0];
  float hi = lo;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - ref.data[i];
    acc += d * d;
    lo = std::min(lo, ref.data[i]);
    hi = std::max(hi, ref.data[i]);
  }
  const double rms = std::sqrt(acc / static_cast<double>(ref.data.size()));
  if (!(hi > lo)) throw DegenerateReference("fidelity: reference has zero dynamic range");

  Fidelity f;
  f.nrmse = rms / (static_cast<double>(hi) - lo);
  f.psnr = rms > 0.0 ? 20.0 * std::log10(static_cast<double>(hi) / rms) : kPsnrIdenticalDb;
  return f;
}

double acquisition_time_s(AcquisitionMode mode, std::array<int, 3> dims, double param_s) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw InvalidDims("acquisition_time: dims must be >= 1");
  }
  if (!(param_s > 0.0)) throw InvalidDims("acquisition_time: dwell/exposure must be > 0");
  if (mode == AcquisitionMode::kPstpm) {
    return static_cast<double>(dims[0]) * dims[1] * dims[2] * param_s;
  }
  return static_cast<double>(dims[2]) * param_s;
}

std::vector<CandidateRecord> detect_candidates(const Volume& vol, const AnnotationSet& ann,
                                               const SpineCriteria& crit) {
  crit.validate();
  const double floor_value = crit.min_prominence * positive_p99_or_zero(vol);
  const StructureFields fields = compute_structure_fields(vol, ann);
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];

  // Exclusion: anything within min_protrusion of a shaft surface or within
  // 0.75 um of an annotated spine surface is not a candidate.
  const float shaft_margin = static_cast<float>(crit.min_protrusion_um);
  const float spine_margin = 0.75f;
  // Candidates must still be attached near a shaft; beyond this reach a
  // blob is not spine-like.
  const float max_reach = 3.0f;

  std::vector<float> plane_bg(nz, 0.f);
  for (int z = 0; z < nz; ++z) {
    std::vector<float> bg;
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const std::size_t vi = vol.index(x, y, z);
        if (fields.shaft_surface[vi] <= shaft_margin) continue;
        if (fields.spine_surface[vi] <= spine_margin) continue;
        bg.push_back(vol.data[vi]);
      }
    }
    plane_bg[z] = static_cast<float>(median_of(bg));
  }

  std::vector<std::uint8_t> marked(vol.size(), 0);
  for (int z = 0; z < nz; ++z) {
    const double threshold = std::max(crit.contrast_ratio * plane_bg[z], floor_value);
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const std::size_t vi = vol.index(x, y, z);
        if (vol.data[vi] <= threshold || vol.data[vi] <= 0.f) continue;
        if (fields.shaft_surface[vi] <= shaft_margin) continue;
        if (fields.spine_surface[vi] <= spine_margin) continue;
        if (fields.shaft_surface[vi] > max_reach) continue;
        marked[vi] = 1;
      }
    }
  }

  // 26-connected components.
  std::vector<CandidateRecord> out;
  std::vector<std::uint8_t> seen(vol.size(), 0);
  for (std::size_t start = 0; start < marked.size(); ++start) {
    if (!marked[start] || seen[start]) continue;
    std::vector<std::size_t> component;
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      component.push_back(cur);
      const int cz = static_cast<int>(cur / (static_cast<std::size_t>(nx) * ny));
      const int rem = static_cast<int>(cur % (static_cast<std::size_t>(nx) * ny));
      const int cy = rem / nx, cx = rem % nx;
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dxs = -1; dxs <= 1; ++dxs) {
            if (!dz && !dy && !dxs) continue;
            const int nx2 = cx + dxs, ny2 = cy + dy, nz2 = cz + dz;
            if (nx2 < 0 || nx2 >= nx || ny2 < 0 || ny2 >= ny || nz2 < 0 || nz2 >= nz) continue;
            const std::size_t ni = vol.index(nx2, ny2, nz2);
            if (marked[ni] && !seen[ni]) {
              seen[ni] = 1;
              queue.push_back(ni);
            }
          }
        }
      }
    }

    if (component.size() < 3) continue;
    int zmin = nz, zmax = -1;
    float best_far = -std::numeric_limits<float>::infinity();
    float best_near = std::numeric_limits<float>::infinity();
    std::size_t far_idx = component[0], near_idx = component[0];
    double mean = 0.0;
    for (std::size_t vi : component) {
      const int z = static_cast<int>(vi / (static_cast<std::size_t>(nx) * ny));
      zmin = std::min(zmin, z);
      zmax = std::max(zmax, z);
      mean += vol.data[vi];
      if (fields.shaft_surface[vi] > best_far) {
        best_far = fields.shaft_surface[vi];
        far_idx = vi;
      }
      if (fields.shaft_surface[vi] < best_near) {
        best_near = fields.shaft_surface[vi];
        near_idx = vi;
      }
    }
    if (zmax - zmin + 1 < crit.min_consecutive_planes) continue;
    if (best_far < shaft_margin + 0.25f) continue;  // barely protrudes

    auto to_um = [&](std::size_t vi) {
      const int z = static_cast<int>(vi / (static_cast<std::size_t>(nx) * ny));
      const int rem = static_cast<int>(vi % (static_cast<std::size_t>(nx) * ny));
      return Vec3{static_cast<double>(rem % nx) * vol.pitch[0],
                  static_cast<double>(rem / nx) * vol.pitch[1],
                  static_cast<double>(z) * vol.pitch[2]};
    };

    CandidateRecord rec;
    rec.id = static_cast<int>(out.size());
    rec.attachment = to_um(near_idx);
    rec.tip = to_um(far_idx);
    rec.length_um = norm(sub(rec.tip, rec.attachment));
    rec.mean_intensity = mean / static_cast<double>(component.size());
    rec.planes = zmax - zmin + 1;
    rec.parent_dendrite = fields.shaft_id[near_idx];
    out.push_back(rec);
  }
  return out;
}

FalsePositiveReport false_positive_check(const Volume& truth, const Volume& measured_input,
                                         Network& net, const TilingPlan& plan,
                                         const AnnotationSet& ann, const ScatterParams& scatter,
                                         const NoiseParams& noise, const SpineCriteria& crit) {
  if (truth.dims != measured_input.dims || truth.pitch != measured_input.pitch) {
    throw ShapeError("false_positive_check: truth and measurement grids differ");
  }

  const Volume synthetic_input = apply_forward_model(truth, scatter, noise);

  auto run_branch = [&](const Volume& input) {
    const Volume normalized = normalize_volume(input, 99.9).first;
    const Volume output = reconstruct(normalized, net, plan);
    FalsePositiveBranch branch;
    branch.recall = spine_visibility(output, ann, crit);
    branch.candidates = detect_candidates(output, ann, crit);
    return branch;
  };

  FalsePositiveReport report;
  report.measured = run_branch(measured_input);
  report.synthetic = run_branch(synthetic_input);
  return report;
}

void write_recall_csv(const RecallReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("write_recall_csv: cannot open " + path);
  f << "id,visible,contrast,planes_passed\n";
  char line[128];
  for (const auto& v : report.verdicts) {
    const double shown = std::min(v.contrast, 1e9);
    std::snprintf(line, sizeof(line), "%d,%d,%.6g,%d\n", v.id, v.visible ? 1 : 0, shown,
                  v.planes_passed);
    f << line;
  }
  f << "# total," << report.total << "\n";
  f << "# visible," << report.visible << "\n";
  f << "# recall," << format_percent(report.visible, report.total) << "\n";
}

void write_profile_csv(const std::vector<double>& profile, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("write_profile_csv: cannot open " + path);
  f << "sample,normalized_intensity\n";
  char line[64];
  for (std::size_t i = 0; i < profile.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, profile[i]);
    f << line;
  }
}

void write_candidates_csv(const std::vector<CandidateRecord>& cands, const std::string& source,
                          const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("write_candidates_csv: cannot open " + path);
  f << "id,ax,ay,az,tx,ty,tz,length_um,radius_um,parent,source\n";
  char line[512];
  for (const auto& c : cands) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%s\n", c.id,
                  c.attachment[0], c.attachment[1], c.attachment[2], c.tip[0], c.tip[1], c.tip[2],
                  c.length_um, 0.0, c.parent_dendrite, source.c_str());
    f << line;
  }
}

}  // namespace descatter3d
