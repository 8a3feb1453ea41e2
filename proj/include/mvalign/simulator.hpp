#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mvalign/metrics.hpp"
#include "mvalign/view_graph.hpp"

namespace mvalign {

struct SceneConfig {
  int num_views = 5;
  int width = 32;
  int height = 24;
  double focal_min = 25.0;   ///< pixels
  double focal_max = 45.0;   ///< pixels
  int num_surface_points = 2000;
  double scene_extent = 1.0;
  std::uint64_t seed = 0;
};

void validate_scene_config(const SceneConfig& config);

/// Maps a per-pixel noise scale to an emitted confidence:
///   clamp(base + gain / (noise_scale + offset), floor, ceil).
/// Monotone decreasing in the noise scale by construction.
struct ConfidenceModel {
  double base = 1.0;
  double gain = 1.0;
  double offset = 0.1;
  double floor = 0.1;
  double ceil = 10.0;

  double operator()(double noise_scale) const;
};

struct NoiseModel {
  double depth_noise_rel = 0.0;      ///< sigma of multiplicative log-normal depth noise
  double outlier_fraction = 0.0;     ///< in [0, 1)
  double outlier_magnitude_rel = 0.0;///< displacement as a fraction of scene_extent
  bool overconfident = false;        ///< outliers draw confidence from the clean top decile
  ConfidenceModel conf_model;
};

void validate_noise_model(const NoiseModel& noise);

/// Ground-truth scene: cameras on a jittered ring looking down at a smooth
/// random height field, with every pixel guaranteed a finite positive depth.
struct SyntheticScene {
  SceneConfig config;
  std::vector<PoseSE3> poses;         ///< camera-to-world
  std::vector<double> focals;
  std::vector<PointMap> view_points;  ///< per view, camera frame; z is the depth
  std::vector<PointMap> pair_cross;   ///< per directed pair (i, j): view j's points in frame i
  std::vector<Vec3> surface_samples;  ///< world-frame samples of the surface

  static int pair_index(int i, int j, int num_views);
  /// X^{i,i} of pair (i, j) is view i's own point map.
  const PointMap& pair_src(int i) const { return view_points[i]; }
  const PointMap& pair_tgt(int i, int j) const {
    return pair_cross[pair_index(i, j, static_cast<int>(poses.size()))];
  }
};

/// Directed pairs in lexicographic order: (0,1), (0,2), ..., (1,0), ...
std::vector<std::pair<int, int>> all_directed_pairs(int num_views);

/// Deterministic given config.seed. Falls back to a flat plane at depth zero
/// when a pixel ray fails to intersect the height field.
SyntheticScene generate_scene(const SceneConfig& config);

struct RenderResult {
  std::vector<PairPrediction> predictions;       ///< lex pair order
  std::vector<std::vector<int>> outlier_pixels;  ///< per prediction: pixel ids in the tgt grid
};

/// Fabricates predictor outputs: per-pixel multiplicative depth noise with a
/// randomly modulated scale, exactly floor(outlier_fraction * H * W) displaced
/// pixels per directed prediction in the cross-view grid, and confidences from
/// the noise model. Deterministic given the seed.
RenderResult render_pair_predictions(const SyntheticScene& scene, const NoiseModel& noise,
                                     std::uint64_t seed);

/// The exactly consistent state: ground-truth poses and focals, depths from
/// the view point maps, identity-scale edge transforms anchored at each
/// prediction's source view.
GlobalState ground_truth_state(const SyntheticScene& scene, const ViewGraph& graph);

Trajectory ground_truth_trajectory(const SyntheticScene& scene);

}  // namespace mvalign
