#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "descatter3d/volume.hpp"

namespace descatter3d {

/// Recipe for a procedural dendrite phantom. All geometry is in
/// volume-local micrometers (x in [0, (nx-1)*dx], analogously y, z).
struct PhantomSpec {
  std::array<int, 3> dims{128, 128, 32};
  std::array<float, 3> pitch{0.35f, 0.35f, 1.0f};
  float depth_offset = 0.f;
  int n_dendrites = 3;
  std::array<double, 2> dendrite_radius_um{0.8, 1.2};
  int n_spines = 16;
  std::array<double, 2> spine_length_um{1.2, 2.5};  // min >= 0.75
  std::array<double, 2> spine_radius_um{0.3, 0.5};
  double shaft_intensity = 1.0;
  double spine_intensity = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SpineRecord {
  int id = 0;
  std::array<double, 3> attachment{};  // um, on the shaft surface
  std::array<double, 3> tip{};         // um
  double length_um = 0.0;              // == |tip - attachment|
  double radius_um = 0.0;
  int parent_dendrite = 0;
};

struct DendriteRecord {
  int id = 0;
  std::vector<std::array<double, 3>> path;  // um polyline along the axis
  double radius_um = 0.0;
};

/// Ground-truth geometry of a phantom: the spine records the scorer
/// consumes plus the dendrite axes it derives shaft masks from.
struct AnnotationSet {
  std::vector<SpineRecord> spines;
  std::vector<DendriteRecord> dendrites;
};

/// Renders dendrite tubes (low-order Bezier paths) and straight spine
/// protrusions with Gaussian cross-sections, then peak-normalizes to 1.
/// Every annotated spine protrudes >= 0.75 um from the shaft surface and
/// its scored portion crosses >= 2 consecutive z-plane depths.
/// Deterministic per spec.seed. Throws PlacementFailure when a spine cannot
/// be placed within 1000 attempts.
std::pair<Volume, AnnotationSet> generate_phantom(const PhantomSpec& spec);

/// Adds peak * exp(-d^2 / (2 (radius/2)^2)) per voxel, d the distance to the
/// polyline, saturating at 2*peak. An empty path is a no-op.
void render_tube(Volume& vol, const std::vector<std::array<double, 3>>& path_um,
                 double radius_um, double peak);

// Spine records as CSV (`id,ax,ay,az,tx,ty,tz,length_um,radius_um,parent`,
// 6 decimal places) plus a companion dendrite-axis CSV
// (`id,point,px,py,pz,radius_um`).
void save_annotations(const AnnotationSet& ann, const std::string& spine_csv_path,
                      const std::string& dendrite_csv_path);
AnnotationSet load_annotations(const std::string& spine_csv_path,
                               const std::string& dendrite_csv_path);

/// Distance from a point to a polyline (squared), in the same units.
double dist2_point_polyline(const std::array<double, 3>& p,
                            const std::vector<std::array<double, 3>>& path);

}  // namespace descatter3d
