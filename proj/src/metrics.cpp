#include "mvalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace mvalign {

double avg_point_error(const PointMap& pred, const MaskMap& pred_mask, const PointMap& gt,
                       const MaskMap& gt_mask) {
  if (pred.size() != pred_mask.size() || gt.size() != gt_mask.size() || pred.size() != gt.size()) {
    throw InvalidInputError("avg_point_error: grid dimensions disagree");
  }
  std::vector<int> common;
  common.reserve(pred.size());
  for (int px = 0; px < pred.size(); ++px) {
    if (pred_mask.at(px) && gt_mask.at(px)) common.push_back(px);
  }
  if (common.empty()) {
    throw DegenerateInputError("avg_point_error: empty mask intersection");
  }
  double z_pred = 0.0, z_gt = 0.0;
  for (int px : common) {
    z_pred += pred.col(px).norm();
    z_gt += gt.col(px).norm();
  }
  z_pred /= static_cast<double>(common.size());
  z_gt /= static_cast<double>(common.size());
  if (!(z_pred > 0.0) || !(z_gt > 0.0)) {
    throw DegenerateInputError("avg_point_error: all points at the origin");
  }
  const double rescale = z_gt / z_pred;
  double total = 0.0;
  for (int px : common) {
    total += (rescale * pred.col(px) - gt.col(px)).norm();
  }
  return total / static_cast<double>(common.size());
}

namespace {

// Exact nearest-neighbor search over 3D points: median-split k-d tree with
// branch-and-bound queries.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Vec3>& points) : points_(points) {
    index_.resize(points.size());
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(2 * points.size() + 1);
    root_ = build(0, static_cast<int>(points.size()));
  }

  double nearest_distance(const Vec3& query) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, query, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    int axis = -1;       // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= 8) {
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3 lo = points_[index_[begin]], hi = lo;
    for (int k = begin + 1; k < end; ++k) {
      lo = lo.cwiseMin(points_[index_[k]]);
      hi = hi.cwiseMax(points_[index_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    node.axis = axis;
    node.split = points_[index_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int node_idx, const Vec3& query, double& best_sq) const {
    const Node& node = nodes_[node_idx];
    if (node.axis < 0) {
      for (int k = node.begin; k < node.end; ++k) {
        best_sq = std::min(best_sq, (points_[index_[k]] - query).squaredNorm());
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, query, best_sq);
    if (diff * diff < best_sq) search(far, query, best_sq);
  }

  const std::vector<Vec3>& points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

double mean_nearest_distance(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  const KdTree3 tree(to);
  double total = 0.0;
  for (const Vec3& p : from) total += tree.nearest_distance(p);
  return total / static_cast<double>(from.size());
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

AccuracyCompleteness accuracy_completeness(const std::vector<Vec3>& recon,
                                           const std::vector<Vec3>& gt) {
  if (recon.empty() || gt.empty()) {
    throw DegenerateInputError("accuracy_completeness: point sets must be non-empty");
  }
  AccuracyCompleteness out;
  out.accuracy = mean_nearest_distance(recon, gt);
  out.completeness = mean_nearest_distance(gt, recon);
  return out;
}

double ate(const Trajectory& est, const Trajectory& gt) {
  if (est.ids.size() != est.poses.size() || gt.ids.size() != gt.poses.size()) {
    throw InvalidInputError("ate: id and pose counts disagree");
  }
  std::unordered_map<int, const PoseSE3*> gt_by_id;
  for (std::size_t k = 0; k < gt.ids.size(); ++k) {
    if (!gt_by_id.emplace(gt.ids[k], &gt.poses[k]).second) {
      throw InvalidInputError("ate: duplicate id in ground-truth trajectory");
    }
  }
  if (est.ids.size() != gt.ids.size()) {
    throw InvalidInputError("ate: trajectories cover different views");
  }
  if (est.ids.size() < 3) {
    throw DegenerateInputError("ate: need at least 3 poses");
  }
  std::vector<Vec3> p_est, p_gt;
  std::vector<double> ones;
  p_est.reserve(est.ids.size());
  p_gt.reserve(est.ids.size());
  for (std::size_t k = 0; k < est.ids.size(); ++k) {
    const auto it = gt_by_id.find(est.ids[k]);
    if (it == gt_by_id.end()) {
      throw InvalidInputError("ate: id " + std::to_string(est.ids[k]) +
                              " missing from ground truth");
    }
    p_est.push_back(est.poses[k].translation);
    p_gt.push_back(it->second->translation);
    ones.push_back(1.0);
  }
  const SimilarityTransform sim = align_similarity(p_est, p_gt, ones);
  double sq_sum = 0.0;
  for (std::size_t k = 0; k < p_est.size(); ++k) {
    const Vec3 aligned = sim.scale * (sim.rotation * p_est[k] + sim.translation);
    sq_sum += (aligned - p_gt[k]).squaredNorm();
  }
  return std::sqrt(sq_sum / static_cast<double>(p_est.size()));
}

double afe(const std::vector<double>& est_focals, const std::vector<double>& gt_focals) {
  if (est_focals.size() != gt_focals.size()) {
    throw InvalidInputError("afe: focal lists have different lengths");
  }
  if (est_focals.empty()) {
    throw InvalidInputError("afe: empty focal lists");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < est_focals.size(); ++k) {
    if (!(gt_focals[k] > 0.0)) {
      throw InvalidInputError("afe: ground-truth focals must be positive");
    }
    total += 100.0 * std::abs(est_focals[k] - gt_focals[k]) / gt_focals[k];
  }
  return total / static_cast<double>(est_focals.size());
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw InvalidInputError("spearman: input lengths differ");
  }
  if (x.size() < 3) {
    throw InvalidInputError("spearman: need at least 3 samples");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, var_x = 0.0, var_y = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = rx[k] - mean;
    const double dy = ry[k] - mean;
    cov += dx * dy;
    var_x += dx * dx;
    var_y += dy * dy;
  }
  if (!(var_x > 0.0) || !(var_y > 0.0)) {
    throw UndefinedCorrelationError("spearman: constant input has no defined rank correlation");
  }
  return cov / std::sqrt(var_x * var_y);
}

}  // namespace mvalign
