#include "descatter3d/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"

namespace descatter3d {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

double dist2_point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = sub(b, a);
  const double ab2 = dot(ab, ab);
  double t = ab2 > 0.0 ? dot(sub(p, a), ab) / ab2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 q = add(a, scale(ab, t));
  const Vec3 d = sub(p, q);
  return dot(d, d);
}

double uniform_in(CounterRng& rng, const std::array<double, 2>& range) {
  return range[0] + (range[1] - range[0]) * rng.next_double();
}

Vec3 random_unit(CounterRng& rng) {
  for (;;) {
    const Vec3 v{rng.next_normal(), rng.next_normal(), rng.next_normal()};
    const double n = norm(v);
    if (n > 1e-9) return scale(v, 1.0 / n);
  }
}

Vec3 bezier(const std::array<Vec3, 4>& c, double t) {
  const double u = 1.0 - t;
  Vec3 p = scale(c[0], u * u * u);
  p = add(p, scale(c[1], 3.0 * u * u * t));
  p = add(p, scale(c[2], 3.0 * u * t * t));
  return add(p, scale(c[3], t * t * t));
}

Vec3 bezier_tangent(const std::array<Vec3, 4>& c, double t) {
  const double u = 1.0 - t;
  Vec3 d = scale(sub(c[1], c[0]), 3.0 * u * u);
  d = add(d, scale(sub(c[2], c[1]), 6.0 * u * t));
  return add(d, scale(sub(c[3], c[2]), 3.0 * t * t));
}

}  // namespace

double dist2_point_polyline(const Vec3& p, const std::vector<Vec3>& path) {
  if (path.empty()) return std::numeric_limits<double>::infinity();
  if (path.size() == 1) {
    const Vec3 d = sub(p, path[0]);
    return dot(d, d);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    best = std::min(best, dist2_point_segment(p, path[i], path[i + 1]));
  }
  return best;
}

void PhantomSpec::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw InvalidDims("PhantomSpec: dims must be >= 1");
  if (!(pitch[0] > 0.f && pitch[1] > 0.f && pitch[2] > 0.f)) {
    throw InvalidDims("PhantomSpec: pitch must be > 0");
  }
  if (n_dendrites < 0 || n_spines < 0) throw InvalidDims("PhantomSpec: counts must be >= 0");
  auto check_range = [](const std::array<double, 2>& r, const char* name) {
    if (!(r[0] > 0.0 && r[1] >= r[0])) {
      throw InvalidDims(std::string("PhantomSpec: bad range for ") + name);
    }
  };
  check_range(dendrite_radius_um, "dendrite_radius_um");
  check_range(spine_length_um, "spine_length_um");
  check_range(spine_radius_um, "spine_radius_um");
  if (spine_length_um[0] < 0.75) {
    throw InvalidDims("PhantomSpec: spine_length_um minimum must be >= 0.75");
  }
  if (!(shaft_intensity > 0.0) || !(spine_intensity > 0.0)) {
    throw InvalidDims("PhantomSpec: intensities must be > 0");
  }
  if (n_spines > 0 && n_dendrites < 1) {
    throw InvalidDims("PhantomSpec: spines require at least one dendrite");
  }
}

void render_tube(Volume& vol, const std::vector<Vec3>& path_um, double radius_um, double peak) {
  if (path_um.empty()) return;
  if (!(radius_um > 0.0)) throw InvalidDims("render_tube: radius must be > 0");

  const double sigma = radius_um / 2.0;
  const double cutoff = 3.5 * sigma;
  const double cutoff2 = cutoff * cutoff;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double cap = 2.0 * peak;
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  const double dx = vol.pitch[0], dy = vol.pitch[1], dz = vol.pitch[2];

  // Min squared distance to the polyline, accumulated per segment over the
  // segment's bounding box so joints are not double-counted.
  std::vector<float> d2(vol.size(), std::numeric_limits<float>::infinity());
  const std::size_t nseg = path_um.size() == 1 ? 1 : path_um.size() - 1;
  for (std::size_t s = 0; s < nseg; ++s) {
    const Vec3& a = path_um[s];
    const Vec3& b = path_um[path_um.size() == 1 ? s : s + 1];
    const int x0 = std::max(0, static_cast<int>(std::floor((std::min(a[0], b[0]) - cutoff) / dx)));
    const int x1 = std::min(nx - 1, static_cast<int>(std::ceil((std::max(a[0], b[0]) + cutoff) / dx)));
    const int y0 = std::max(0, static_cast<int>(std::floor((std::min(a[1], b[1]) - cutoff) / dy)));
    const int y1 = std::min(ny - 1, static_cast<int>(std::ceil((std::max(a[1], b[1]) + cutoff) / dy)));
    const int z0 = std::max(0, static_cast<int>(std::floor((std::min(a[2], b[2]) - cutoff) / dz)));
    const int z1 = std::min(nz - 1, static_cast<int>(std::ceil((std::max(a[2], b[2]) + cutoff) / dz)));
    for (int z = z0; z <= z1; ++z) {
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Vec3 p{x * dx, y * dy, z * dz};
          const double d = dist2_point_segment(p, a, b);
          float& slot = d2[vol.index(x, y, z)];
          if (d < slot) slot = static_cast<float>(d);
        }
      }
    }
  }

  for (std::size_t i = 0; i < d2.size(); ++i) {
    const double d = d2[i];
    if (d > cutoff2) continue;
    const double contrib = peak * std::exp(-d * inv2s2);
    double v = vol.data[i] + contrib;
    if (v > cap) v = std::max(static_cast<double>(vol.data[i]), cap);
    vol.data[i] = static_cast<float>(v);
  }
}

namespace {

struct Extent {
  double x, y, z;
};

std::vector<Vec3> sample_bezier(const std::array<Vec3, 4>& ctrl, int n_samples) {
  std::vector<Vec3> path(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    path[i] = bezier(ctrl, static_cast<double>(i) / (n_samples - 1));
  }
  return path;
}

// Number of z-plane depths k*dz crossed by [zlo, zhi].
int planes_crossed(double zlo, double zhi, double dz) {
  const int k0 = static_cast<int>(std::ceil(zlo / dz - 1e-9));
  const int k1 = static_cast<int>(std::floor(zhi / dz + 1e-9));
  return k1 - k0 + 1;
}

}  // namespace

std::pair<Volume, AnnotationSet> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Volume vol(spec.dims, spec.pitch, spec.depth_offset);
  AnnotationSet ann;

  const Extent ext{(spec.dims[0] - 1) * static_cast<double>(spec.pitch[0]),
                   (spec.dims[1] - 1) * static_cast<double>(spec.pitch[1]),
                   (spec.dims[2] - 1) * static_cast<double>(spec.pitch[2])};

  CounterRng rng = CounterRng::stream(spec.seed, 0x7068616eull);  // phantom stream

  // Dendrites: cubic Bezier tubes spanning the volume along x or y.
  struct Shaft {
    std::array<Vec3, 4> ctrl;
    std::vector<Vec3> path;
    double radius;
  };
  std::vector<Shaft> shafts;
  for (int d = 0; d < spec.n_dendrites; ++d) {
    Shaft s;
    s.radius = uniform_in(rng, spec.dendrite_radius_um);
    const int span_axis = static_cast<int>(rng.next_below(2));
    auto rand_point = [&](double t_span) {
      Vec3 p;
      const std::array<double, 3> e{ext.x, ext.y, ext.z};
      for (int a = 0; a < 3; ++a) {
        if (a == span_axis) {
          p[a] = t_span * e[a];
        } else if (a == 2) {
          p[a] = (0.15 + 0.7 * rng.next_double()) * e[a];
        } else {
          p[a] = (0.1 + 0.8 * rng.next_double()) * e[a];
        }
      }
      return p;
    };
    s.ctrl = {rand_point(0.02), rand_point(0.35), rand_point(0.65), rand_point(0.98)};
    const int n_pts = 2 * std::max({spec.dims[0], spec.dims[1], spec.dims[2]});
    s.path = sample_bezier(s.ctrl, n_pts);
    shafts.push_back(std::move(s));

    DendriteRecord rec;
    rec.id = d;
    rec.radius_um = shafts.back().radius;
    // The stored axis keeps every 4th sample; enough for masks and scoring.
    for (std::size_t i = 0; i < shafts.back().path.size(); i += 4) {
      rec.path.push_back(shafts.back().path[i]);
    }
    rec.path.push_back(shafts.back().path.back());
    ann.dendrites.push_back(std::move(rec));
  }
  for (const Shaft& s : shafts) {
    render_tube(vol, s.path, s.radius, spec.shaft_intensity);
  }

  // Spines: straight protrusions at >= 30 degrees from the shaft tangent.
  // The scored portion (beyond 0.75 um from the shaft surface) must cross
  // at least two z-plane depths so the paper's scorability criteria hold on
  // the clean phantom by construction.
  const double min_protrusion = 0.75;
  const double min_separation = 3.0;  // um between attachment points
  const double cos_max = std::cos(30.0 * M_PI / 180.0);
  for (int si = 0; si < spec.n_spines; ++si) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const int shaft_id = static_cast<int>(rng.next_below(shafts.size()));
      const Shaft& shaft = shafts[shaft_id];
      const double t = 0.08 + 0.84 * rng.next_double();
      const Vec3 base = bezier(shaft.ctrl, t);
      Vec3 tangent = bezier_tangent(shaft.ctrl, t);
      const double tn = norm(tangent);
      if (tn < 1e-9) continue;
      tangent = scale(tangent, 1.0 / tn);

      const Vec3 dir = random_unit(rng);
      if (std::fabs(dot(dir, tangent)) > cos_max) continue;

      const double length = uniform_in(rng, spec.spine_length_um);
      const double radius = uniform_in(rng, spec.spine_radius_um);
      const Vec3 attachment = add(base, scale(dir, shaft.radius));
      const Vec3 tip = add(attachment, scale(dir, length));

      const double margin = radius + 0.5;
      auto inside = [&](const Vec3& p) {
        return p[0] >= margin && p[0] <= ext.x - margin && p[1] >= margin &&
               p[1] <= ext.y - margin && p[2] >= margin && p[2] <= ext.z - margin;
      };
      if (!inside(attachment) || !inside(tip)) continue;

      // Scored-portion plane crossing rule.
      const double t0 = std::min(min_protrusion / length, 1.0);
      const Vec3 tail_start = add(attachment, scale(sub(tip, attachment), t0));
      const double zlo = std::min(tail_start[2], tip[2]);
      const double zhi = std::max(tail_start[2], tip[2]);
      if (planes_crossed(zlo, zhi, spec.pitch[2]) < 2) continue;

      // Keep spines apart and clear of foreign shafts.
      bool clash = false;
      for (const SpineRecord& prev : ann.spines) {
        const Vec3 d = sub(attachment, prev.attachment);
        if (norm(d) < min_separation) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      for (std::size_t k = 0; k < shafts.size() && !clash; ++k) {
        if (static_cast<int>(k) == shaft_id) continue;
        const double d2tip = dist2_point_polyline(tip, shafts[k].path);
        const double clear = shafts[k].radius + radius + 0.5;
        if (d2tip < clear * clear) clash = true;
      }
      if (clash) continue;

      render_tube(vol, {base, tip}, radius, spec.spine_intensity);

      SpineRecord rec;
      rec.id = si;
      rec.attachment = attachment;
      rec.tip = tip;
      rec.length_um = norm(sub(tip, attachment));
      rec.radius_um = radius;
      rec.parent_dendrite = shaft_id;
      ann.spines.push_back(rec);
      placed = true;
    }
    if (!placed) {
      throw PlacementFailure("generate_phantom: could not place spine " + std::to_string(si) +
                             " within 1000 attempts");
    }
  }

  // Peak-normalize to 1 (a fully empty phantom stays all-zero).
  float peak = 0.f;
  for (float v : vol.data) peak = std::max(peak, v);
  if (peak > 0.f) {
    const float inv = 1.f / peak;
    for (float& v : vol.data) v *= inv;
  }
  return {std::move(vol), std::move(ann)};
}

void save_annotations(const AnnotationSet& ann, const std::string& spine_csv_path,
                      const std::string& dendrite_csv_path) {
  std::ofstream fs(spine_csv_path, std::ios::trunc);
  if (!fs) throw FormatError("save_annotations: cannot open " + spine_csv_path);
  fs << "id,ax,ay,az,tx,ty,tz,length_um,radius_um,parent\n";
  char line[512];
  for (const SpineRecord& s : ann.spines) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n", s.id,
                  s.attachment[0], s.attachment[1], s.attachment[2], s.tip[0], s.tip[1], s.tip[2],
                  s.length_um, s.radius_um, s.parent_dendrite);
    fs << line;
  }

  std::ofstream fd(dendrite_csv_path, std::ios::trunc);
  if (!fd) throw FormatError("save_annotations: cannot open " + dendrite_csv_path);
  fd << "id,point,px,py,pz,radius_um\n";
  for (const DendriteRecord& d : ann.dendrites) {
    for (std::size_t i = 0; i < d.path.size(); ++i) {
      std::snprintf(line, sizeof(line), "%d,%zu,%.6f,%.6f,%.6f,%.6f\n", d.id, i, d.path[i][0],
                    d.path[i][1], d.path[i][2], d.radius_um);
      fd << line;
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

AnnotationSet load_annotations(const std::string& spine_csv_path,
                               const std::string& dendrite_csv_path) {
  AnnotationSet ann;
  {
    std::ifstream f(spine_csv_path);
    if (!f) throw FormatError("load_annotations: cannot open " + spine_csv_path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("id,ax,", 0) != 0) {
      throw FormatError("load_annotations: bad spine CSV header");
    }
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != 10) throw FormatError("load_annotations: bad spine row");
      SpineRecord s;
      s.id = std::stoi(fields[0]);
      for (int a = 0; a < 3; ++a) s.attachment[a] = std::stod(fields[1 + a]);
      for (int a = 0; a < 3; ++a) s.tip[a] = std::stod(fields[4 + a]);
      s.length_um = std::stod(fields[7]);
      s.radius_um = std::stod(fields[8]);
      s.parent_dendrite = std::stoi(fields[9]);
      ann.spines.push_back(s);
    }
  }
  {
    std::ifstream f(dendrite_csv_path);
    if (!f) throw FormatError("load_annotations: cannot open " + dendrite_csv_path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("id,point,", 0) != 0) {
      throw FormatError("load_annotations: bad dendrite CSV header");
    }
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != 6) throw FormatError("load_annotations: bad dendrite row");
      const int id = std::stoi(fields[0]);
      if (ann.dendrites.empty() || ann.dendrites.back().id != id) {
        DendriteRecord d;
        d.id = id;
        ann.dendrites.push_back(d);
      }
      ann.dendrites.back().path.push_back(
          {std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4])});
      ann.dendrites.back().radius_um = std::stod(fields[5]);
    }
  }
  return ann;
}

}  // namespace descatter3d
