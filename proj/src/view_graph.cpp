#include "mvalign/view_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace mvalign {

int ViewGraph::prediction_index(int src, int tgt) const {
  if (src < 0 || tgt < 0 || src >= num_views_ || tgt >= num_views_) return -1;
  return pred_lookup_[static_cast<std::size_t>(src) * num_views_ + tgt];
}

int ViewGraph::edge_index(int a, int b) const {
  const int p = prediction_index(std::min(a, b), std::max(a, b));
  return p < 0 ? -1 : pred_edge_[p];
}

ViewGraph build_view_graph(std::vector<PairPrediction> predictions, int num_views) {
  if (num_views < 2) {
    throw InvalidInputError("build_view_graph: need at least 2 views");
  }
  ViewGraph g;
  g.num_views_ = num_views;
  g.predictions_ = std::move(predictions);
  g.pred_lookup_.assign(static_cast<std::size_t>(num_views) * num_views, -1);
  g.pred_edge_.assign(g.predictions_.size(), -1);

  for (std::size_t k = 0; k < g.predictions_.size(); ++k) {
    const PairPrediction& p = g.predictions_[k];
    validate_prediction(p);
    if (p.view_src >= num_views || p.view_tgt >= num_views) {
      throw GraphError("build_view_graph: prediction (" + std::to_string(p.view_src) + ", " +
                       std::to_string(p.view_tgt) + ") exceeds num_views=" +
                       std::to_string(num_views));
    }
    int& slot = g.pred_lookup_[static_cast<std::size_t>(p.view_src) * num_views + p.view_tgt];
    if (slot >= 0) {
      throw GraphError("build_view_graph: duplicate directed pair (" +
                       std::to_string(p.view_src) + ", " + std::to_string(p.view_tgt) + ")");
    }
    slot = static_cast<int>(k);
  }

  for (int a = 0; a < num_views; ++a) {
    for (int b = a + 1; b < num_views; ++b) {
      const int fwd = g.prediction_index(a, b);
      const int bwd = g.prediction_index(b, a);
      if (fwd < 0 && bwd < 0) continue;
      if (fwd < 0 || bwd < 0) {
        const int have_src = fwd < 0 ? b : a;
        const int have_tgt = fwd < 0 ? a : b;
        throw GraphError("build_view_graph: pair (" + std::to_string(have_src) + ", " +
                         std::to_string(have_tgt) + ") present but reverse direction (" +
                         std::to_string(have_tgt) + ", " + std::to_string(have_src) +
                         ") is missing");
      }
      ViewGraph::Edge e;
      e.view_a = a;
      e.view_b = b;
      e.forward = fwd;
      e.backward = bwd;
      g.pred_edge_[fwd] = static_cast<int>(g.edges_.size());
      g.pred_edge_[bwd] = static_cast<int>(g.edges_.size());
      g.edges_.push_back(e);
    }
  }
  return g;
}

double edge_confidence_score(const ViewGraph& graph, int edge_index) {
  const ViewGraph::Edge& e = graph.edges()[edge_index];
  const PairPrediction& fwd = graph.predictions()[e.forward];
  const PairPrediction& bwd = graph.predictions()[e.backward];
  const double total = fwd.conf_src.values.sum() + fwd.conf_tgt.values.sum() +
                       bwd.conf_src.values.sum() + bwd.conf_tgt.values.sum();
  const double count = fwd.conf_src.size() + fwd.conf_tgt.size() + bwd.conf_src.size() +
                       bwd.conf_tgt.size();
  return total / count;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

std::string describe_components(UnionFind& uf, int n) {
  std::vector<std::vector<int>> groups(n);
  for (int v = 0; v < n; ++v) groups[uf.find(v)].push_back(v);
  std::ostringstream oss;
  bool first_group = true;
  for (const auto& grp : groups) {
    if (grp.empty()) continue;
    if (!first_group) oss << ", ";
    first_group = false;
    oss << "{";
    for (std::size_t i = 0; i < grp.size(); ++i) {
      if (i) oss << ", ";
      oss << grp[i];
    }
    oss << "}";
  }
  return oss.str();
}

}  // namespace

SpanningTree extract_spanning_tree(const ViewGraph& graph) {
  const int n = graph.num_views();
  std::vector<int> order(graph.edges().size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(graph.edges().size());
  for (std::size_t k = 0; k < graph.edges().size(); ++k) {
    scores[k] = edge_confidence_score(graph, static_cast<int>(k));
  }
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    const auto& ex = graph.edges()[x];
    const auto& ey = graph.edges()[y];
    return std::make_pair(ex.view_a, ex.view_b) < std::make_pair(ey.view_a, ey.view_b);
  });

  UnionFind uf(n);
  SpanningTree tree;
  for (int k : order) {
    const auto& e = graph.edges()[k];
    if (uf.unite(e.view_a, e.view_b)) {
      tree.edge_indices.push_back(k);
    }
  }
  if (static_cast<int>(tree.edge_indices.size()) != n - 1) {
    throw DisconnectedGraphError("extract_spanning_tree: graph is disconnected, components: " +
                                 describe_components(uf, n));
  }
  // Root edge: highest score among tree edges; the sort order already breaks
  // ties lexicographically, so the first accepted edge wins.
  tree.root_edge = tree.edge_indices.front();
  return tree;
}

void validate_state(const GlobalState& state, const ViewGraph& graph) {
  const std::size_t n = static_cast<std::size_t>(graph.num_views());
  if (state.poses.size() != n || state.focals.size() != n || state.depths.size() != n) {
    throw InvalidInputError("state: per-view arrays do not match num_views");
  }
  if (state.edge_poses.size() != graph.predictions().size() ||
      state.edge_scales.size() != graph.predictions().size()) {
    throw InvalidInputError("state: per-prediction arrays do not match the graph");
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!(state.focals[v] > 0.0)) throw InvalidStateError("state: non-positive focal");
    if (!(state.depths[v].values > 0.0).all() || !state.depths[v].values.isFinite().all()) {
      throw InvalidStateError("state: depth map of view " + std::to_string(v) +
                              " has non-positive or non-finite entries");
    }
  }
  for (double s : state.edge_scales) {
    if (!(s > 0.0)) throw InvalidStateError("state: non-positive edge scale");
  }
  for (const PairPrediction& p : graph.predictions()) {
    const DepthMap& ds = state.depths[p.view_src];
    const DepthMap& dt = state.depths[p.view_tgt];
    if (p.points_src.width != ds.width || p.points_src.height != ds.height ||
        p.points_tgt.width != dt.width || p.points_tgt.height != dt.height) {
      throw InvalidInputError("state: depth map dimensions disagree with prediction grids for "
                              "pair (" + std::to_string(p.view_src) + ", " +
                              std::to_string(p.view_tgt) + ")");
    }
  }
}

PairwiseEstimates compute_pairwise_estimates(const ViewGraph& graph) {
  PairwiseEstimates est;
  est.prediction_focals.resize(graph.predictions().size(),
                               std::numeric_limits<double>::quiet_NaN());
  est.prediction_conf_mean.resize(graph.predictions().size(), 0.0);
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    est.prediction_conf_mean[k] = p.conf_src.values.mean();
    try {
      est.prediction_focals[k] =
          estimate_focal(p.points_src, p.conf_src, p.points_src.width, p.points_src.height);
    } catch (const DegenerateInputError&) {
      // left as NaN; fusion skips it
    }
  }

  est.forward.resize(graph.edges().size());
  est.backward.resize(graph.edges().size());
  for (std::size_t k = 0; k < graph.edges().size(); ++k) {
    const auto& e = graph.edges()[k];
    const PairPrediction& fwd = graph.predictions()[e.forward];
    const PairPrediction& bwd = graph.predictions()[e.backward];
    // Forward orientation a -> b compares view a's points in frame a (from the
    // (a, b) prediction) with view a's points in frame b (from the (b, a)
    // prediction).
    try {
      const RelativePoseEstimate r =
          estimate_relative_pose(fwd.points_src, bwd.points_tgt, fwd.conf_src, bwd.conf_tgt);
      est.forward[k] = {r.pose, r.scale, true};
    } catch (const DegenerateInputError&) {
    }
    try {
      const RelativePoseEstimate r =
          estimate_relative_pose(bwd.points_src, fwd.points_tgt, bwd.conf_src, fwd.conf_tgt);
      est.backward[k] = {r.pose, r.scale, true};
    } catch (const DegenerateInputError&) {
    }
  }
  return est;
}

namespace {

constexpr double kDepthFloorRel = 1e-6;

DepthMap depth_from_self_prediction(const PointMap& self_points, double view_scale) {
  DepthMap d = ScalarMap::constant(self_points.width, self_points.height, 0.0);
  double positive_mean = 0.0;
  int positive_count = 0;
  for (int p = 0; p < self_points.size(); ++p) {
    const double z = self_points.points(2, p);
    if (z > 0.0) {
      positive_mean += z;
      ++positive_count;
    }
  }
  positive_mean = positive_count > 0 ? positive_mean / positive_count : 1.0;
  const double floor = kDepthFloorRel * positive_mean / view_scale;
  for (int p = 0; p < self_points.size(); ++p) {
    d.values[p] = std::max(self_points.points(2, p) / view_scale, floor);
  }
  return d;
}

}  // namespace

GlobalState propagate_initialization(const ViewGraph& graph, const SpanningTree& tree,
                                     const PairwiseEstimates& estimates) {
  const int n = graph.num_views();
  if (static_cast<int>(tree.edge_indices.size()) != n - 1 || tree.root_edge < 0) {
    throw InvalidInputError("propagate_initialization: tree does not span the graph");
  }

  // Focal fusion: confidence-weighted mean over predictions sourced at each view.
  std::vector<double> focals(n, 0.0), focal_weight(n, 0.0);
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const double f = estimates.prediction_focals[k];
    if (std::isnan(f)) continue;
    const int v = graph.predictions()[k].view_src;
    const double w = estimates.prediction_conf_mean[k];
    focals[v] += w * f;
    focal_weight[v] += w;
  }
  for (int v = 0; v < n; ++v) {
    if (!(focal_weight[v] > 0.0)) {
      throw InvalidStateError("propagate_initialization: no usable focal estimate for view " +
                              std::to_string(v));
    }
    focals[v] /= focal_weight[v];
  }

  // Tree adjacency.
  std::vector<std::vector<int>> adjacency(n);
  for (int k : tree.edge_indices) {
    const auto& e = graph.edges()[k];
    adjacency[e.view_a].push_back(k);
    adjacency[e.view_b].push_back(k);
  }

  std::vector<PoseSE3> poses(n);
  std::vector<double> view_scale(n, 0.0);   // prediction units per global unit
  std::vector<int> self_prediction(n, -1);  // prediction whose source grid seeds the depth
  std::vector<char> placed(n, 0);

  const auto& root = graph.edges()[tree.root_edge];
  poses[root.view_a] = PoseSE3{};
  view_scale[root.view_a] = 1.0;
  self_prediction[root.view_a] = root.forward;
  placed[root.view_a] = 1;

  std::deque<int> frontier{root.view_a};
  while (!frontier.empty()) {
    const int x = frontier.front();
    frontier.pop_front();
    for (int k : adjacency[x]) {
      const auto& e = graph.edges()[k];
      const int y = (e.view_a == x) ? e.view_b : e.view_a;
      if (placed[y]) continue;
      const OrientationEstimate& o =
          (e.view_a == x) ? estimates.forward[k] : estimates.backward[k];
      if (!o.valid) {
        throw InvalidStateError("propagate_initialization: degenerate pairwise estimate on tree "
                                "edge (" + std::to_string(e.view_a) + ", " +
                                std::to_string(e.view_b) + ")");
      }
      // o maps frame x to frame y with translation expressed in the scale of
      // predictions sourced at x; o.scale carries the per-frame scale ratio.
      PoseSE3 rel = o.pose;
      rel.translation /= view_scale[x];
      poses[y] = poses[x] * rel.inverse();
      view_scale[y] = o.scale * view_scale[x];
      self_prediction[y] = graph.prediction_index(y, x);
      placed[y] = 1;
      frontier.push_back(y);
    }
  }

  GlobalState state;
  state.poses = std::move(poses);
  state.focals = std::move(focals);
  state.depths.reserve(n);
  for (int v = 0; v < n; ++v) {
    const PairPrediction& self = graph.predictions()[self_prediction[v]];
    state.depths.push_back(depth_from_self_prediction(self.points_src, view_scale[v]));
  }
  state.edge_poses.resize(graph.predictions().size());
  state.edge_scales.resize(graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const int src = graph.predictions()[k].view_src;
    PoseSE3 edge_pose = state.poses[src];
    edge_pose.translation *= view_scale[src];
    state.edge_poses[k] = edge_pose;
    state.edge_scales[k] = 1.0 / view_scale[src];
  }
  validate_state(state, graph);
  return state;
}

}  // namespace mvalign
