#include "mvalign/align.hpp"

#include <cmath>

namespace mvalign {

void validate_config(const AlignConfig& config) {
  if (!(config.mu > 0.0)) throw InvalidInputError("config: mu must be positive");
  if (config.steps <= 0) throw InvalidInputError("config: steps must be positive");
  if (!(config.learning_rate > 0.0)) throw InvalidInputError("config: learning_rate must be positive");
  if (config.weight_update_every <= 0) {
    throw InvalidInputError("config: weight_update_every must be positive");
  }
  if (!(config.conf_floor >= 0.0)) throw InvalidInputError("config: conf_floor must be non-negative");
  if (!(config.residual_epsilon > 0.0)) {
    throw InvalidInputError("config: residual_epsilon must be positive");
  }
}

WeightMaps floored_confidences(const ViewGraph& graph, double conf_floor) {
  WeightMaps w;
  w.entries.reserve(graph.predictions().size());
  for (const PairPrediction& p : graph.predictions()) {
    WeightMaps::Entry e;
    e.src = p.conf_src;
    e.tgt = p.conf_tgt;
    e.src.values = (e.src.values < conf_floor).select(0.0, e.src.values);
    e.tgt.values = (e.tgt.values < conf_floor).select(0.0, e.tgt.values);
    w.entries.push_back(std::move(e));
  }
  return w;
}

namespace {

// One residual grid: view `view`'s points from prediction `pred`, compared
// against that view's back-projection.
struct GridRef {
  int pred = -1;
  int view = -1;
  const PointMap* points = nullptr;
  const ScalarMap* conf = nullptr;
  const ScalarMap* weight = nullptr;
};

std::vector<GridRef> collect_grids(const ViewGraph& graph, const WeightMaps& weights) {
  std::vector<GridRef> grids;
  grids.reserve(2 * graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const WeightMaps::Entry& w = weights.entries[k];
    grids.push_back({static_cast<int>(k), p.view_src, &p.points_src, &p.conf_src, &w.src});
    grids.push_back({static_cast<int>(k), p.view_tgt, &p.points_tgt, &p.conf_tgt, &w.tgt});
  }
  return grids;
}

}  // namespace

ResidualMaps residuals(const GlobalState& state, const ViewGraph& graph) {
  validate_state(state, graph);
  ResidualMaps out;
  out.entries.resize(graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const PoseSE3& edge_pose = state.edge_poses[k];
    const double sigma = state.edge_scales[k];
    auto compute = [&](int view, const PointMap& pts) {
      const DepthMap& depth = state.depths[view];
      PointMap res = PointMap::zeros(pts.width, pts.height);
      const PoseSE3& pose = state.poses[view];
      const double inv_f = 1.0 / state.focals[view];
      const double cx = 0.5 * pts.width;
      const double cy = 0.5 * pts.height;
      for (int vv = 0; vv < pts.height; ++vv) {
        for (int u = 0; u < pts.width; ++u) {
          const int px = vv * pts.width + u;
          const double d = depth.values[px];
          const Vec3 cam(d * (u - cx) * inv_f, d * (vv - cy) * inv_f, d);
          res.points.col(px) = pose.apply(cam) - sigma * edge_pose.apply(pts.col(px));
        }
      }
      return res;
    };
    out.entries[k].src = compute(p.view_src, p.points_src);
    out.entries[k].tgt = compute(p.view_tgt, p.points_tgt);
  }
  return out;
}

WeightMaps update_weights(const ResidualMaps& res, const ViewGraph& graph, double mu,
                          double conf_floor) {
  if (!(mu > 0.0)) throw InvalidInputError("update_weights: mu must be positive");
  WeightMaps out;
  out.entries.resize(graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    auto compute = [&](const ScalarMap& conf, const PointMap& residual) {
      ScalarMap w = ScalarMap::constant(conf.width, conf.height, 0.0);
      for (int px = 0; px < conf.size(); ++px) {
        const double c = conf.values[px];
        if (c < conf_floor) continue;
        const double ratio = 1.0 + residual.points.col(px).norm() / mu;
        w.values[px] = c / (ratio * ratio);
      }
      return w;
    };
    out.entries[k].src = compute(p.conf_src, res.entries[k].src);
    out.entries[k].tgt = compute(p.conf_tgt, res.entries[k].tgt);
  }
  return out;
}

double objective(const GlobalState& state, const ViewGraph& graph, const WeightMaps& weights,
                 const AlignConfig& config) {
  const ResidualMaps res = residuals(state, graph);
  const double eps2 = config.residual_epsilon * config.residual_epsilon;
  double total = 0.0;
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    auto accumulate = [&](const ScalarMap& conf, const ScalarMap& w, const PointMap& r) {
      for (int px = 0; px < conf.size(); ++px) {
        const double c = conf.values[px];
        if (c < config.conf_floor) continue;
        const double rho = std::sqrt(r.points.col(px).squaredNorm() + eps2);
        total += w.values[px] * rho;
        if (config.robust) {
          const double dw = std::sqrt(w.values[px]) - std::sqrt(c);
          total += config.mu * dw * dw;
        }
      }
    };
    accumulate(p.conf_src, weights.entries[k].src, res.entries[k].src);
    accumulate(p.conf_tgt, weights.entries[k].tgt, res.entries[k].tgt);
  }
  return total;
}

double edge_scale_product(const GlobalState& state) {
  double product = 1.0;
  for (double s : state.edge_scales) product *= s;
  return product;
}

void normalize_scales(GlobalState& state) {
  if (state.edge_scales.empty()) return;
  double log_sum = 0.0;
  for (double s : state.edge_scales) {
    if (!(s > 0.0)) throw InvalidStateError("normalize_scales: non-positive edge scale");
    log_sum += std::log(s);
  }
  const double log_mean = log_sum / static_cast<double>(state.edge_scales.size());
  const double inv_geomean = std::exp(-log_mean);
  for (double& s : state.edge_scales) s *= inv_geomean;
}

ParameterLayout ParameterLayout::build(const GlobalState& state, const ViewGraph& graph) {
  ParameterLayout layout;
  layout.num_views = graph.num_views();
  layout.num_predictions = static_cast<int>(graph.predictions().size());
  int offset = 0;
  layout.view_offset.resize(layout.num_views);
  for (int v = 0; v < layout.num_views; ++v) {
    layout.view_offset[v] = offset;
    offset += 7;
  }
  layout.depth_offset.resize(layout.num_views);
  layout.depth_size.resize(layout.num_views);
  for (int v = 0; v < layout.num_views; ++v) {
    layout.depth_offset[v] = offset;
    layout.depth_size[v] = state.depths[v].size();
    offset += layout.depth_size[v];
  }
  layout.prediction_offset.resize(layout.num_predictions);
  for (int k = 0; k < layout.num_predictions; ++k) {
    layout.prediction_offset[k] = offset;
    offset += 7;
  }
  layout.total = offset;
  return layout;
}

ObjectiveEval objective_and_gradient(const GlobalState& state, const ViewGraph& graph,
                                     const WeightMaps& weights, const AlignConfig& config,
                                     const ParameterLayout& layout) {
  validate_state(state, graph);
  ObjectiveEval eval;
  eval.gradient = Eigen::VectorXd::Zero(layout.total);
  const double eps2 = config.residual_epsilon * config.residual_epsilon;

  const std::vector<GridRef> grids = collect_grids(graph, weights);
  for (const GridRef& grid : grids) {
    const int view = grid.view;
    const int pred = grid.pred;
    const PoseSE3& pose = state.poses[view];
    const PoseSE3& edge_pose = state.edge_poses[pred];
    const double sigma = state.edge_scales[pred];
    const DepthMap& depth = state.depths[view];
    const double inv_f = 1.0 / state.focals[view];
    const int width = grid.points->width;
    const int height = grid.points->height;
    const double cx = 0.5 * width;
    const double cy = 0.5 * height;

    Vec3 grad_rot_v = Vec3::Zero(), grad_t_v = Vec3::Zero();
    double grad_logf = 0.0;
    Vec3 grad_rot_e = Vec3::Zero(), grad_t_e = Vec3::Zero();
    double grad_logsigma = 0.0;
    double* depth_grad = eval.gradient.data() + layout.depth_offset[view];

    for (int vv = 0; vv < height; ++vv) {
      for (int u = 0; u < width; ++u) {
        const int px = vv * width + u;
        const double c = grid.conf->values[px];
        if (c < config.conf_floor) continue;
        const double w = grid.weight->values[px];

        const double d = depth.values[px];
        const Vec3 y(d * (u - cx) * inv_f, d * (vv - cy) * inv_f, d);
        const Vec3 a = pose.rotation * y;
        const Vec3 b = edge_pose.rotation * grid.points->col(px);
        const Vec3 c_term = sigma * (b + edge_pose.translation);
        const Vec3 e = a + pose.translation - c_term;

        const double rho = std::sqrt(e.squaredNorm() + eps2);
        eval.value += w * rho;
        if (config.robust) {
          const double dw = std::sqrt(w) - std::sqrt(c);
          eval.value += config.mu * dw * dw;
        }
        if (!(w > 0.0)) continue;
        // Residuals at the floating-point noise floor carry no directional
        // information, but dividing them by rho ~ epsilon would turn them
        // into gradient noise that Adam amplifies to full-size steps. Treat
        // such pixels as exactly converged.
        if (e.squaredNorm() <= 1e-6 * eps2) continue;

        const Vec3 g = (w / rho) * e;
        grad_t_v += g;
        grad_rot_v += a.cross(g);
        // d e / d log f = R_v * (-y_x, -y_y, 0)
        grad_logf -= g.dot(pose.rotation * Vec3(y.x(), y.y(), 0.0));
        depth_grad[px] += g.dot(a);
        grad_rot_e -= sigma * b.cross(g);
        grad_t_e -= sigma * g;
        grad_logsigma -= g.dot(c_term);
      }
    }

    const int vo = layout.view_offset[view];
    eval.gradient.segment<3>(vo) += grad_rot_v;
    eval.gradient.segment<3>(vo + 3) += grad_t_v;
    eval.gradient[vo + 6] += grad_logf;
    const int po = layout.prediction_offset[pred];
    eval.gradient.segment<3>(po) += grad_rot_e;
    eval.gradient.segment<3>(po + 3) += grad_t_e;
    eval.gradient[po + 6] += grad_logsigma;
  }
  return eval;
}

void apply_step(GlobalState& state, const Eigen::VectorXd& delta, const ParameterLayout& layout) {
  for (int v = 0; v < layout.num_views; ++v) {
    const int o = layout.view_offset[v];
    const Vec3 rot_inc = delta.segment<3>(o);
    if (!rot_inc.isZero()) {
      state.poses[v].rotation = so3_exp(rot_inc) * state.poses[v].rotation;
    }
    state.poses[v].translation += delta.segment<3>(o + 3);
    state.focals[v] *= std::exp(delta[o + 6]);
    const int d0 = layout.depth_offset[v];
    for (int p = 0; p < layout.depth_size[v]; ++p) {
      state.depths[v].values[p] *= std::exp(delta[d0 + p]);
    }
  }
  for (int k = 0; k < layout.num_predictions; ++k) {
    const int o = layout.prediction_offset[k];
    const Vec3 rot_inc = delta.segment<3>(o);
    if (!rot_inc.isZero()) {
      state.edge_poses[k].rotation = so3_exp(rot_inc) * state.edge_poses[k].rotation;
    }
    state.edge_poses[k].translation += delta.segment<3>(o + 3);
    state.edge_scales[k] *= std::exp(delta[o + 6]);
  }
}

OptimizeResult optimize(const GlobalState& init, const ViewGraph& graph,
                        const AlignConfig& config) {
  validate_config(config);
  validate_state(init, graph);

  OptimizeResult result;
  result.state = init;
  GlobalState& state = result.state;
  normalize_scales(state);

  result.weights = floored_confidences(graph, config.conf_floor);
  const ParameterLayout layout = ParameterLayout::build(state, graph);

  if (config.robust) {
    result.weights = update_weights(residuals(state, graph), graph, config.mu, config.conf_floor);
  }
  const double obj0 = objective(state, graph, result.weights, config);
  if (!std::isfinite(obj0)) {
    throw DivergedError(0, "optimize: non-finite objective at step 0");
  }
  result.objective_trace.reserve(config.steps + 1);
  result.scale_product_trace.reserve(config.steps + 1);
  result.objective_trace.push_back(obj0);
  result.scale_product_trace.push_back(edge_scale_product(state));

  // Adam wanders when started at or driven near an optimum (normalized steps
  // stay lr-sized however small the gradient), so the returned state is the
  // best iterate, re-scored whenever the weights change.
  GlobalState best_state = state;
  double best_objective = obj0;

  Eigen::VectorXd m = Eigen::VectorXd::Zero(layout.total);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.total);

  for (int step = 0; step < config.steps; ++step) {
    if (config.robust && step % config.weight_update_every == 0 && step > 0) {
      result.weights = update_weights(residuals(state, graph), graph, config.mu, config.conf_floor);
      best_objective = objective(best_state, graph, result.weights, config);
    }

    ObjectiveEval eval = objective_and_gradient(state, graph, result.weights, config, layout);
    if (!std::isfinite(eval.value) || !eval.gradient.allFinite()) {
      throw DivergedError(step, "optimize: non-finite objective or gradient at step " +
                                    std::to_string(step));
    }
    // Gauge fix: view 0's pose stays at its initial value.
    eval.gradient.segment<6>(layout.view_offset[0]).setZero();

    const int t = step + 1;
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * eval.gradient;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * eval.gradient.cwiseProduct(eval.gradient);
    const double m_corr = 1.0 - std::pow(config.adam_beta1, t);
    const double v_corr = 1.0 - std::pow(config.adam_beta2, t);
    const Eigen::ArrayXd m_hat = m.array() / m_corr;
    const Eigen::ArrayXd v_hat = v.array() / v_corr;
    // Cosine-annealed learning rate. The unsquared-norm objective keeps
    // per-pixel gradient magnitudes from decaying near the optimum, so Adam
    // at a constant rate orbits in a limit cycle of amplitude ~lr instead of
    // parking; annealing to zero removes that floor.
    const double lr = 0.5 * config.learning_rate *
                      (1.0 + std::cos(M_PI * static_cast<double>(step) / config.steps));
    const Eigen::VectorXd step_vec = (lr * m_hat / (v_hat.sqrt() + config.adam_epsilon)).matrix();

    apply_step(state, -step_vec, layout);
    try {
      validate_state(state, graph);
      normalize_scales(state);
    } catch (const Error&) {
      throw DivergedError(step, "optimize: state left its valid range at step " +
                                    std::to_string(step));
    }

    const double obj = objective(state, graph, result.weights, config);
    result.objective_trace.push_back(obj);
    result.scale_product_trace.push_back(edge_scale_product(state));
    if (obj < best_objective) {
      best_objective = obj;
      best_state = state;
    }
  }

  state = std::move(best_state);
  if (config.robust && config.steps % config.weight_update_every == 0) {
    result.weights = update_weights(residuals(state, graph), graph, config.mu, config.conf_floor);
  }
  result.best_objective = best_objective;
  return result;
}

}  // namespace mvalign
