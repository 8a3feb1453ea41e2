#pragma once

#include <vector>

#include "mvalign/pairwise.hpp"

namespace mvalign {

/// Connectivity graph over views. Directed predictions are grouped into
/// undirected edges; every undirected edge must carry both directions.
class ViewGraph {
 public:
  struct Edge {
    int view_a = -1, view_b = -1;  ///< view_a < view_b
    int forward = -1;              ///< prediction index for (view_a, view_b)
    int backward = -1;             ///< prediction index for (view_b, view_a)
  };

  int num_views() const { return num_views_; }
  const std::vector<PairPrediction>& predictions() const { return predictions_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Index into predictions() for directed pair (src, tgt), -1 when absent.
  int prediction_index(int src, int tgt) const;
  /// Index into edges() for unordered pair {a, b}, -1 when absent.
  int edge_index(int a, int b) const;
  /// Edge index that directed prediction `pred_index` belongs to.
  int edge_of_prediction(int pred_index) const { return pred_edge_[pred_index]; }

  friend ViewGraph build_view_graph(std::vector<PairPrediction> predictions, int num_views);

 private:
  int num_views_ = 0;
  std::vector<PairPrediction> predictions_;
  std::vector<Edge> edges_;
  std::vector<int> pred_lookup_;  // num_views^2 table, -1 when absent
  std::vector<int> pred_edge_;    // per prediction: owning edge index
};

/// Validates predictions and groups them into a ViewGraph. Throws GraphError
/// when a directed pair lacks its reverse, names the missing pair.
ViewGraph build_view_graph(std::vector<PairPrediction> predictions, int num_views);

/// Mean of all pixel values over the four confidence grids of an edge.
double edge_confidence_score(const ViewGraph& graph, int edge_index);

struct SpanningTree {
  std::vector<int> edge_indices;  ///< indices into graph.edges()
  int root_edge = -1;             ///< the highest-confidence tree edge
};

/// Maximum-score spanning tree under edge_confidence_score, ties broken by
/// lowest (view_a, view_b). Throws DisconnectedGraphError naming the
/// components when the graph is not connected.
SpanningTree extract_spanning_tree(const ViewGraph& graph);

/// Full variable set of the global alignment: per-view camera-to-world poses,
/// focals and depth maps, plus one pose and scale per directed prediction
/// mapping that prediction's frame into the global frame.
struct GlobalState {
  std::vector<PoseSE3> poses;
  std::vector<double> focals;
  std::vector<DepthMap> depths;
  std::vector<PoseSE3> edge_poses;
  std::vector<double> edge_scales;
};

void validate_state(const GlobalState& state, const ViewGraph& graph);

struct OrientationEstimate {
  PoseSE3 pose;
  double scale = 1.0;
  bool valid = false;
};

struct PairwiseEstimates {
  std::vector<double> prediction_focals;     ///< per prediction; NaN when degenerate
  std::vector<double> prediction_conf_mean;  ///< mean source-grid confidence
  std::vector<OrientationEstimate> forward;  ///< per edge: frame view_a -> frame view_b
  std::vector<OrientationEstimate> backward; ///< per edge: frame view_b -> frame view_a
};

PairwiseEstimates compute_pairwise_estimates(const ViewGraph& graph);

/// Places the root edge's source view at the identity and composes relative
/// poses and scales breadth-first along the tree. Focals are fused per view
/// as the confidence-weighted mean of all estimates where the view is the
/// source; depths come from each view's self-prediction z values divided by
/// the scale propagated to that view. Throws InvalidStateError when a tree
/// edge's pairwise estimate is degenerate.
GlobalState propagate_initialization(const ViewGraph& graph, const SpanningTree& tree,
                                     const PairwiseEstimates& estimates);

}  // namespace mvalign
