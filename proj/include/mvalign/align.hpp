#pragma once

#include <vector>

#include "mvalign/view_graph.hpp"

namespace mvalign {

/// Hyperparameters of the global alignment. The defaults are the published
/// operating point: mu = 0.01, 300 Adam steps at learning rate 0.01, a weight
/// update every 10th step, and a confidence floor of 0.5.
struct AlignConfig {
  double mu = 0.01;
  int steps = 300;
  double learning_rate = 0.01;
  int weight_update_every = 10;
  double conf_floor = 0.5;
  bool robust = true;
  double residual_epsilon = 1e-9;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

void validate_config(const AlignConfig& config);

/// Per-pixel optimizable weights, one pair of grids per directed prediction,
/// aligned with graph.predictions(). Weights never exceed the raw confidence
/// and are exactly zero where the raw confidence falls below the floor.
struct WeightMaps {
  struct Entry {
    ScalarMap src, tgt;
  };
  std::vector<Entry> entries;
};

/// Per-pixel residual vectors, one pair of grids per directed prediction.
struct ResidualMaps {
  struct Entry {
    PointMap src, tgt;
  };
  std::vector<Entry> entries;
};

/// Raw confidences with entries below `conf_floor` zeroed; the fixed weights
/// of the non-robust mode and the starting point of the robust mode.
WeightMaps floored_confidences(const ViewGraph& graph, double conf_floor);

/// Residual e_p = T_v * backproject(D_v, f_v) - scale_e * T_e * X_p for every
/// grid of every directed prediction (v is the grid's view, e the prediction).
ResidualMaps residuals(const GlobalState& state, const ViewGraph& graph);

/// Closed-form weight update w = C / (1 + ||e|| / mu)^2, then zeroed where
/// the raw confidence falls below `conf_floor`.
WeightMaps update_weights(const ResidualMaps& res, const ViewGraph& graph, double mu,
                          double conf_floor);

/// Alignment objective. Every pixel contributes w * sqrt(||e||^2 + eps^2); in
/// robust mode pixels additionally contribute the regularizer
/// mu * (sqrt(w) - sqrt(C))^2. Pixels whose raw confidence falls below the
/// floor are excluded from the sum entirely.
double objective(const GlobalState& state, const ViewGraph& graph, const WeightMaps& weights,
                 const AlignConfig& config);

/// Divides every edge scale by the geometric mean so the product is exactly
/// one. Throws InvalidStateError on non-positive scales.
void normalize_scales(GlobalState& state);

double edge_scale_product(const GlobalState& state);

/// Flat parameter indexing for the optimizer and for derivative checks.
/// Per view: [rotation increment (3), translation (3), log focal (1)] then
/// per-pixel log depths; per directed prediction: [rotation increment (3),
/// translation (3), log scale (1)]. Rotation increments are local: a step
/// delta retracts as R <- so3_exp(delta) * R.
struct ParameterLayout {
  int num_views = 0;
  int num_predictions = 0;
  std::vector<int> view_offset;
  std::vector<int> depth_offset;
  std::vector<int> depth_size;
  std::vector<int> prediction_offset;
  int total = 0;

  static ParameterLayout build(const GlobalState& state, const ViewGraph& graph);
};

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Objective value and its analytic gradient with respect to every parameter
/// block at the current state (rotation increments evaluated at zero).
ObjectiveEval objective_and_gradient(const GlobalState& state, const ViewGraph& graph,
                                     const WeightMaps& weights, const AlignConfig& config,
                                     const ParameterLayout& layout);

/// Retraction: applies a flat parameter increment to the state. Rotations
/// compose on the left, log-parameterized quantities update multiplicatively.
void apply_step(GlobalState& state, const Eigen::VectorXd& delta, const ParameterLayout& layout);

struct OptimizeResult {
  GlobalState state;                        ///< best-objective iterate
  WeightMaps weights;                       ///< calibrated against `state`
  double best_objective = 0.0;              ///< objective of `state`
  std::vector<double> objective_trace;      ///< steps + 1 values
  std::vector<double> scale_product_trace;  ///< steps + 1 values
};

/// Runs config.steps Adam steps on (poses, edge poses, scales, focals,
/// depths) with a cosine-annealed learning rate. View 0's pose is frozen to
/// fix the gauge; edge scales are re-normalized after every step. In robust
/// mode the closed-form weight update runs before step 0 and then every
/// config.weight_update_every steps. Returns the lowest-objective iterate.
/// Throws DivergedError when the objective or gradient turns non-finite.
OptimizeResult optimize(const GlobalState& init, const ViewGraph& graph,
                        const AlignConfig& config);

}  // namespace mvalign
