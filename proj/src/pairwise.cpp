#include "mvalign/pairwise.hpp"

#include <cmath>

namespace mvalign {

namespace {

constexpr double kResidualGuard = 1e-12;
constexpr int kMaxWeiszfeldIterations = 100;
constexpr double kWeiszfeldTolerance = 1e-9;

bool grids_match(const PairPrediction& p) {
  const int w = p.points_src.width, h = p.points_src.height;
  auto ok = [&](int gw, int gh) { return gw == w && gh == h; };
  return ok(p.points_tgt.width, p.points_tgt.height) && ok(p.conf_src.width, p.conf_src.height) &&
         ok(p.conf_tgt.width, p.conf_tgt.height);
}

}  // namespace

void validate_prediction(const PairPrediction& pred) {
  const std::string tag =
      "prediction (" + std::to_string(pred.view_src) + ", " + std::to_string(pred.view_tgt) + ")";
  if (pred.view_src < 0 || pred.view_tgt < 0 || pred.view_src == pred.view_tgt) {
    throw InvalidInputError(tag + ": invalid view ids");
  }
  if (pred.points_src.width <= 0 || pred.points_src.height <= 0 || !grids_match(pred)) {
    throw InvalidInputError(tag + ": all four grids must share positive HxW dimensions");
  }
  if (!pred.points_src.points.allFinite() || !pred.points_tgt.points.allFinite()) {
    throw InvalidInputError(tag + ": point coordinates must be finite");
  }
  if (!pred.conf_src.values.isFinite().all() || !pred.conf_tgt.values.isFinite().all() ||
      (pred.conf_src.values < 0.0).any() || (pred.conf_tgt.values < 0.0).any()) {
    throw InvalidInputError(tag + ": confidences must be finite and non-negative");
  }
}

double estimate_focal(const PointMap& points, const ScalarMap& conf, int width, int height,
                      std::vector<double>* objective_trace) {
  if (points.width != width || points.height != height || conf.width != width ||
      conf.height != height) {
    throw InvalidInputError("estimate_focal: grid dimensions do not match width/height");
  }

  // Usable pixels: positive confidence and a point in front of the camera.
  struct Term {
    double w;
    Eigen::Vector2d pix;  // (u', v')
    Eigen::Vector2d ray;  // (x/z, y/z)
  };
  std::vector<Term> terms;
  terms.reserve(points.size());
  const double cx = 0.5 * width;
  const double cy = 0.5 * height;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const int p = v * width + u;
      const double w = conf.values[p];
      const double z = points.points(2, p);
      if (!(w > 0.0) || !(z > 0.0)) continue;
      terms.push_back({w,
                       Eigen::Vector2d(u - cx, v - cy),
                       Eigen::Vector2d(points.points(0, p) / z, points.points(1, p) / z)});
    }
  }
  if (terms.size() < 2) {
    throw DegenerateInputError("estimate_focal: fewer than 2 usable pixels (positive confidence "
                               "and positive z), got " + std::to_string(terms.size()));
  }

  auto objective = [&](double f) {
    double total = 0.0;
    for (const Term& t : terms) total += t.w * (t.pix - f * t.ray).norm();
    return total;
  };

  double focal = static_cast<double>(std::max(width, height));
  double prev_obj = objective(focal);
  if (objective_trace) objective_trace->push_back(prev_obj);
  // Monotonicity slack: rounding noise is proportional to the summands, so
  // anchor it to the starting objective rather than the current one.
  const double slack = 1e-12 * (prev_obj + 1.0);

  for (int it = 0; it < kMaxWeiszfeldIterations; ++it) {
    double num = 0.0, den = 0.0;
    for (const Term& t : terms) {
      const double r = std::max((t.pix - focal * t.ray).norm(), kResidualGuard);
      const double s = t.w / r;
      num += s * t.pix.dot(t.ray);
      den += s * t.ray.squaredNorm();
    }
    if (!(den > 0.0)) {
      throw DegenerateInputError("estimate_focal: all usable rays vanish at the principal point");
    }
    const double next = num / den;
    const double obj = objective(next);
    if (obj > prev_obj + slack) {
      throw InvalidStateError("estimate_focal: Weiszfeld objective increased");
    }
    if (objective_trace) objective_trace->push_back(obj);
    prev_obj = obj;
    const bool converged = std::abs(next - focal) < kWeiszfeldTolerance * std::abs(focal);
    focal = next;
    if (converged) break;
  }
  if (!(focal > 0.0)) {
    throw DegenerateInputError("estimate_focal: converged to a non-positive focal length");
  }
  return focal;
}

RelativePoseEstimate estimate_relative_pose(const PointMap& points_a, const PointMap& points_b,
                                            const ScalarMap& conf_a, const ScalarMap& conf_b) {
  if (points_a.size() != points_b.size() || points_a.size() != conf_a.size() ||
      points_a.size() != conf_b.size()) {
    throw InvalidInputError("estimate_relative_pose: grid dimensions disagree");
  }
  std::vector<Vec3> a, b;
  std::vector<double> w;
  a.reserve(points_a.size());
  b.reserve(points_a.size());
  w.reserve(points_a.size());
  for (int p = 0; p < points_a.size(); ++p) {
    const double weight = conf_a.values[p] * conf_b.values[p];
    if (!(weight > 0.0)) continue;
    a.push_back(points_a.col(p));
    b.push_back(points_b.col(p));
    w.push_back(weight);
  }
  const SimilarityTransform sim = align_similarity(a, b, w);
  RelativePoseEstimate out;
  out.pose.rotation = sim.rotation;
  out.pose.translation = sim.translation;
  out.scale = sim.scale;
  return out;
}

}  // namespace mvalign
