#pragma once

#include <vector>

#include "mvalign/geometry.hpp"

namespace mvalign {

struct Trajectory {
  std::vector<int> ids;
  std::vector<PoseSE3> poses;
};

/// Mean Euclidean distance over the mask intersection after dividing each map
/// by its average point norm on that intersection and re-scaling the
/// prediction to the ground-truth normalizer. Invariant to uniform positive
/// rescaling of either argument.
double avg_point_error(const PointMap& pred, const MaskMap& pred_mask, const PointMap& gt,
                       const MaskMap& gt_mask);

struct AccuracyCompleteness {
  double accuracy = 0.0;      ///< mean distance from recon points to nearest gt point
  double completeness = 0.0;  ///< mean distance from gt points to nearest recon point
};

/// Exact nearest-neighbor distances via a k-d tree.
AccuracyCompleteness accuracy_completeness(const std::vector<Vec3>& recon,
                                           const std::vector<Vec3>& gt);

/// Root-mean-square camera position error after closed-form similarity
/// alignment of the estimated positions to the ground truth. Requires at
/// least 3 poses with matching id sets.
double ate(const Trajectory& est, const Trajectory& gt);

/// Mean percentage focal error: mean_v 100 * |f_est - f_gt| / f_gt.
double afe(const std::vector<double>& est_focals, const std::vector<double>& gt_focals);

/// Spearman rank correlation with average ranks for ties. Throws
/// UndefinedCorrelationError on constant input.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mvalign
