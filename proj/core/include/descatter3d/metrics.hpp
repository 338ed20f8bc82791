#pragma once

#include <array>
#include <string>
#include <vector>

#include "descatter3d/network.hpp"
#include "descatter3d/phantom.hpp"
#include "descatter3d/scatter.hpp"
#include "descatter3d/tiling.hpp"
#include "descatter3d/volume.hpp"

namespace descatter3d {

/// Automated analog of the paper's spine scoring rules: a spine counts as
/// visible when, in enough consecutive z planes crossed by its scored
/// portion (the part at least min_protrusion from the shaft surface), the
/// mean intensity along that portion beats contrast_ratio times the median
/// of an annular background (shaft and spine masks excluded) and clears a
/// prominence floor tied to the volume's bright-end percentile.
struct SpineCriteria {
  double min_protrusion_um = 0.75;
  int min_consecutive_planes = 2;
  double contrast_ratio = 2.0;  // tau
  double annulus_inner_um = 1.5;
  double annulus_outer_um = 3.0;
  double min_prominence = 0.1;  // fraction of the positive 99th percentile

  void validate() const;
};

struct SpineVerdict {
  int id = 0;
  bool visible = false;
  double contrast = 0.0;  // best single-plane mean/background ratio
  int planes_passed = 0;  // longest consecutive run of passing planes
};

struct RecallReport {
  std::size_t total = 0;
  std::size_t visible = 0;
  double recall = 0.0;
  std::vector<SpineVerdict> verdicts;
};

/// "49.8%" for (147, 295); one decimal place.
std::string format_percent(std::size_t visible, std::size_t total);

RecallReport spine_visibility(const Volume& vol, const AnnotationSet& ann,
                              const SpineCriteria& crit);

/// Samples the volume at n equal arc-length points along the polyline
/// (micrometer coordinates), averaging across an in-plane perpendicular
/// band of +-half_width, and normalizes by the profile maximum.
std::vector<double> intensity_profile(const Volume& vol,
                                      const std::vector<std::array<double, 3>>& polyline_um,
                                      double half_width_um, int n_samples);

constexpr double kPsnrIdenticalDb = 999.0;  // serialized instead of +inf

struct Fidelity {
  double nrmse = 0.0;
  double psnr = 0.0;
};
Fidelity fidelity(const Volume& pred, const Volume& ref);

enum class AcquisitionMode { kPstpm, kTfm };

/// PSTPM: nx*ny*nz*dwell_s. TFM: nz*exposure_s.
double acquisition_time_s(AcquisitionMode mode, std::array<int, 3> dims, double param_s);

/// A supra-threshold protrusion-like blob that matches no annotation.
struct CandidateRecord {
  int id = 0;
  std::array<double, 3> attachment{};  // nearest point to the shaft
  std::array<double, 3> tip{};         // farthest voxel from the shaft
  double length_um = 0.0;
  double mean_intensity = 0.0;
  int planes = 0;
  int parent_dendrite = -1;
};

std::vector<CandidateRecord> detect_candidates(const Volume& vol, const AnnotationSet& ann,
                                               const SpineCriteria& crit);

struct FalsePositiveBranch {
  RecallReport recall;
  std::vector<CandidateRecord> candidates;
};

struct FalsePositiveReport {
  FalsePositiveBranch measured;   // network fed the provided measurement
  FalsePositiveBranch synthetic;  // network fed forward-model(truth)
};

/// Runs the network on (a) the measured input and (b) a synthetic TFM
/// volume regenerated from the ground truth, scores both against the
/// truth's annotations, and lists off-annotation candidates for each.
/// Inputs are normalized volume-globally (positive 99.9th percentile)
/// before inference, mirroring the training conditioning.
FalsePositiveReport false_positive_check(const Volume& truth, const Volume& measured_input,
                                         Network& net, const TilingPlan& plan,
                                         const AnnotationSet& ann, const ScatterParams& scatter,
                                         const NoiseParams& noise, const SpineCriteria& crit);

void write_recall_csv(const RecallReport& report, const std::string& path);
void write_profile_csv(const std::vector<double>& profile, const std::string& path);
void write_candidates_csv(const std::vector<CandidateRecord>& cands, const std::string& source,
                          const std::string& path);

}  // namespace descatter3d
