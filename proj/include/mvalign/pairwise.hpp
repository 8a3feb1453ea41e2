#pragma once

#include <vector>

#include "mvalign/geometry.hpp"

namespace mvalign {

/// Output of one directed pairwise inference for views (i, j). Both point
/// maps live in the camera frame of view i and share one unknown scale.
struct PairPrediction {
  int view_src = -1;  ///< i
  int view_tgt = -1;  ///< j
  PointMap points_src;  ///< view i's points, frame i
  PointMap points_tgt;  ///< view j's points, frame i
  ScalarMap conf_src;
  ScalarMap conf_tgt;
};

/// Checks grid shapes, finiteness and non-negative confidences.
void validate_prediction(const PairPrediction& pred);

/// Recovers the focal length from a self-view point map by the weighted
/// Weiszfeld iteration on
///   sum_p conf_p * || (u'_p, v'_p) - f * (X_x, X_y) / X_z ||.
/// Pixels with non-positive z or non-positive confidence are excluded.
/// Iterations stop when |delta f| / f < 1e-9 or after 100 rounds; the
/// objective is checked to be non-increasing every iteration. Pass
/// `objective_trace` to record the per-iteration objective values.
double estimate_focal(const PointMap& points, const ScalarMap& conf, int width, int height,
                      std::vector<double>* objective_trace = nullptr);

struct RelativePoseEstimate {
  PoseSE3 pose;
  double scale = 1.0;
};

/// Closed-form weighted Procrustes fit minimizing
///   sum_p conf_a_p * conf_b_p * || scale * pose(a_p) - b_p ||^2.
/// Throws DegenerateInputError when fewer than 3 pixels carry positive
/// product weight or the support is collinear.
RelativePoseEstimate estimate_relative_pose(const PointMap& points_a, const PointMap& points_b,
                                            const ScalarMap& conf_a, const ScalarMap& conf_b);

}  // namespace mvalign
