#include "mvalign/pseudo_label.hpp"

#include <cmath>

namespace mvalign {

PseudoLabelSet generate_pseudo_labels(const GlobalState& state, const WeightMaps& weights,
                                      const ViewGraph& graph, double cutoff) {
  // Labels use only poses, focals and depths; edge transforms may be absent.
  const std::size_t n = static_cast<std::size_t>(graph.num_views());
  if (state.poses.size() != n || state.focals.size() != n || state.depths.size() != n) {
    throw InvalidInputError("generate_pseudo_labels: state does not cover every view");
  }
  if (weights.entries.size() != graph.predictions().size()) {
    throw InvalidInputError("generate_pseudo_labels: weight maps do not match the graph");
  }

  // Refined points per view in the global frame, shared by every pair that
  // references the view.
  std::vector<PointMap> global_points;
  global_points.reserve(state.poses.size());
  for (std::size_t v = 0; v < state.poses.size(); ++v) {
    CameraIntrinsics intr{state.focals[v], state.depths[v].width, state.depths[v].height};
    global_points.push_back(back_project(state.depths[v], intr, state.poses[v]));
  }

  PseudoLabelSet out;
  out.entries.resize(graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const PoseSE3 to_pair_frame = state.poses[p.view_src].inverse();
    auto fill = [&](int view, const ScalarMap& weight, PointMap& labels, MaskMap& mask) {
      const PointMap& pts = global_points[view];
      labels = PointMap::zeros(pts.width, pts.height);
      mask = MaskMap::constant(pts.width, pts.height, false);
      for (int px = 0; px < pts.size(); ++px) {
        if (weight.values[px] > cutoff) {
          mask.values[px] = 1;
          labels.points.col(px) = to_pair_frame.apply(pts.col(px));
        }
      }
    };
    fill(p.view_src, weights.entries[k].src, out.entries[k].labels_src, out.entries[k].mask_src);
    fill(p.view_tgt, weights.entries[k].tgt, out.entries[k].labels_tgt, out.entries[k].mask_tgt);
  }
  return out;
}

double normalization_factor(const PointMap& points_i, const MaskMap& mask_i,
                            const PointMap& points_j, const MaskMap& mask_j) {
  if (points_i.size() != mask_i.size() || points_j.size() != mask_j.size()) {
    throw InvalidInputError("normalization_factor: mask dimensions disagree with points");
  }
  double sum = 0.0;
  long count = 0;
  for (int px = 0; px < points_i.size(); ++px) {
    if (!mask_i.at(px)) continue;
    sum += points_i.col(px).norm();
    ++count;
  }
  for (int px = 0; px < points_j.size(); ++px) {
    if (!mask_j.at(px)) continue;
    sum += points_j.col(px).norm();
    ++count;
  }
  if (count == 0) {
    throw DegenerateInputError("normalization_factor: no valid points in either view");
  }
  return sum / static_cast<double>(count);
}

ScalarMap regression_loss(const PointMap& pred, const PointMap& label, const MaskMap& mask,
                          double z_pred, double z_label) {
  if (pred.size() != label.size() || pred.size() != mask.size()) {
    throw InvalidInputError("regression_loss: grid dimensions disagree");
  }
  if (!(z_pred > 0.0) || !(z_label > 0.0)) {
    throw InvalidInputError("regression_loss: normalizers must be positive");
  }
  ScalarMap out = ScalarMap::constant(pred.width, pred.height, 0.0);
  for (int px = 0; px < pred.size(); ++px) {
    if (!mask.at(px)) continue;
    out.values[px] = (pred.col(px) / z_pred - label.col(px) / z_label).norm();
  }
  return out;
}

double confidence_aware_loss(const ScalarMap& losses, const ScalarMap& conf, const MaskMap& mask,
                             double alpha) {
  if (losses.size() != conf.size() || losses.size() != mask.size()) {
    throw InvalidInputError("confidence_aware_loss: grid dimensions disagree");
  }
  double total = 0.0;
  for (int px = 0; px < losses.size(); ++px) {
    if (!mask.at(px)) continue;
    const double c = conf.values[px];
    if (!(c > 0.0)) {
      throw InvalidInputError("confidence_aware_loss: non-positive confidence on a masked pixel");
    }
    total += c * losses.values[px] - alpha * std::log(c);
  }
  return total;
}

}  // namespace mvalign
