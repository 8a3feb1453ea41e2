#pragma once

#include "mvalign/align.hpp"

namespace mvalign {

/// Hyperparameters of the labeling losses. The cutoff default of 1.5 is the
/// published operating point; alpha is the confidence-regularizer strength.
struct LossConfig {
  double alpha = 0.2;
  double cutoff = 1.5;
};

/// Confidence-thresholded labels in image-pair frames. For the directed pair
/// (i, j), both views' refined points are expressed in frame i. Entries whose
/// mask is false carry a zero label.
struct PseudoLabelSet {
  struct Entry {
    PointMap labels_src;
    MaskMap mask_src;
    PointMap labels_tgt;
    MaskMap mask_tgt;
  };
  std::vector<Entry> entries;  ///< aligned with graph.predictions()
};

/// Label for pixel p of view v in pair (i, j):
///   inverse(T_i) * T_v * backproject(D_v, f_v)_p,
/// retained where the final weight strictly exceeds the cutoff.
PseudoLabelSet generate_pseudo_labels(const GlobalState& state, const WeightMaps& weights,
                                      const ViewGraph& graph, double cutoff);

/// Average distance-to-origin of the valid points across both views of a
/// pair. Throws DegenerateInputError when no point is valid.
double normalization_factor(const PointMap& points_i, const MaskMap& mask_i,
                            const PointMap& points_j, const MaskMap& mask_j);

/// Per-pixel loss || pred / z_pred - label / z_label || on masked pixels,
/// zero elsewhere. Throws InvalidInputError on non-positive normalizers.
ScalarMap regression_loss(const PointMap& pred, const PointMap& label, const MaskMap& mask,
                          double z_pred, double z_label);

/// sum_p conf_p * loss_p - alpha * log(conf_p) over masked pixels. Throws
/// InvalidInputError when a masked pixel carries a non-positive confidence.
double confidence_aware_loss(const ScalarMap& losses, const ScalarMap& conf, const MaskMap& mask,
                             double alpha);

}  // namespace mvalign
