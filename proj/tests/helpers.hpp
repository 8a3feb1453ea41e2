#pragma once

#include <random>
#include <vector>

#include "mvalign/align.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/view_graph.hpp"

namespace mvalign::testing {

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Vec3 random_vec3(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return Vec3(dist(rng), dist(rng), dist(rng));
}

/// Random rotation built from a quaternion, independent of so3_exp.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline PoseSE3 random_pose(std::mt19937_64& rng, double translation_scale = 1.0) {
  PoseSE3 pose;
  pose.rotation = random_rotation(rng);
  pose.translation = translation_scale * random_vec3(rng);
  return pose;
}

inline ScalarMap random_conf(std::mt19937_64& rng, int w, int h, double lo = 0.5,
                             double hi = 3.0) {
  ScalarMap m = ScalarMap::constant(w, h, 0.0);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int p = 0; p < m.size(); ++p) m.values[p] = dist(rng);
  return m;
}

inline PointMap random_points(std::mt19937_64& rng, int w, int h, double lo = -1.0,
                              double hi = 1.0) {
  PointMap m = PointMap::zeros(w, h);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int p = 0; p < m.size(); ++p) {
    m.points.col(p) = Vec3(dist(rng), dist(rng), dist(rng));
  }
  return m;
}

/// Minimizes f over [lo, hi] by golden-section search.
template <typename F>
double golden_section_minimize(F f, double lo, double hi, int iterations = 200) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// A small fully-connected synthetic graph with hand-built consistent
/// geometry is produced by the simulator; tests that need raw custom
/// predictions construct them directly.
inline PairPrediction make_prediction(int src, int tgt, const PointMap& ps, const PointMap& pt,
                                      const ScalarMap& cs, const ScalarMap& ct) {
  PairPrediction pred;
  pred.view_src = src;
  pred.view_tgt = tgt;
  pred.points_src = ps;
  pred.points_tgt = pt;
  pred.conf_src = cs;
  pred.conf_tgt = ct;
  return pred;
}

/// Central-difference gradient of the alignment objective through the
/// retraction, the oracle for the analytic gradient.
inline Eigen::VectorXd finite_difference_gradient(const GlobalState& state, const ViewGraph& graph,
                                                  const WeightMaps& weights,
                                                  const AlignConfig& config,
                                                  const ParameterLayout& layout,
                                                  double h = 1e-6) {
  Eigen::VectorXd grad(layout.total);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(layout.total);
  for (int k = 0; k < layout.total; ++k) {
    delta[k] = h;
    GlobalState plus = state;
    apply_step(plus, delta, layout);
    const double f_plus = objective(plus, graph, weights, config);
    delta[k] = -h;
    GlobalState minus = state;
    apply_step(minus, delta, layout);
    const double f_minus = objective(minus, graph, weights, config);
    delta[k] = 0.0;
    grad[k] = (f_plus - f_minus) / (2.0 * h);
  }
  return grad;
}

/// Parameter blocks of the layout as (offset, size, name) triples.
struct ParamBlock {
  int offset;
  int size;
  const char* name;
};

inline std::vector<ParamBlock> parameter_blocks(const ParameterLayout& layout) {
  std::vector<ParamBlock> blocks;
  for (int v = 0; v < layout.num_views; ++v) {
    blocks.push_back({layout.view_offset[v], 3, "view rotation"});
    blocks.push_back({layout.view_offset[v] + 3, 3, "view translation"});
    blocks.push_back({layout.view_offset[v] + 6, 1, "log focal"});
    blocks.push_back({layout.depth_offset[v], layout.depth_size[v], "log depth"});
  }
  for (int k = 0; k < layout.num_predictions; ++k) {
    blocks.push_back({layout.prediction_offset[k], 3, "edge rotation"});
    blocks.push_back({layout.prediction_offset[k] + 3, 3, "edge translation"});
    blocks.push_back({layout.prediction_offset[k] + 6, 1, "log edge scale"});
  }
  return blocks;
}

inline double max_block_relative_error(const Eigen::VectorXd& analytic,
                                       const Eigen::VectorXd& numeric,
                                       const ParameterLayout& layout) {
  double worst = 0.0;
  for (const ParamBlock& b : parameter_blocks(layout)) {
    const double diff = (analytic.segment(b.offset, b.size) - numeric.segment(b.offset, b.size)).norm();
    const double scale = std::max(numeric.segment(b.offset, b.size).norm(), 1e-8);
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

/// Perturbs all poses by `rot_rad` / `trans`, and edge scales by up to
/// `log_scale` in log space. Depths and focals stay put.
inline void perturb_state(GlobalState& state, const ParameterLayout& layout, std::mt19937_64& rng,
                          double rot_rad, double trans, double log_scale) {
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(layout.total);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto perturb_pose = [&](int offset) {
    const Vec3 axis = random_vec3(rng).normalized();
    delta.segment<3>(offset) = rot_rad * axis;
    delta.segment<3>(offset + 3) = trans * random_vec3(rng).normalized();
  };
  for (int v = 0; v < layout.num_views; ++v) perturb_pose(layout.view_offset[v]);
  for (int k = 0; k < layout.num_predictions; ++k) {
    perturb_pose(layout.prediction_offset[k]);
    delta[layout.prediction_offset[k] + 6] = log_scale * u(rng);
  }
  apply_step(state, delta, layout);
}

}  // namespace mvalign::testing
