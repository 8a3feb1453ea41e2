#include "mvalign/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mvalign/rng.hpp"

namespace mvalign {

namespace {

// RNG stream purposes; part of the determinism contract.
enum Stream : std::uint64_t {
  kFocal = 1,
  kRingAngle = 2,
  kRingRadius = 3,
  kRingElevation = 4,
  kTarget = 5,
  kSurface = 6,
  kSurfaceSample = 7,
  kNoiseScale = 8,
  kDepthNoise = 9,
  kOutlierSelect = 10,
  kOutlierDirection = 11,
  kOutlierConfidence = 12,
};

constexpr int kNumSinusoids = 8;
constexpr double kDownMargin = 0.15;        // rad beyond the half field of view
constexpr double kMaxElevation = 1.45;      // rad; steeper than this is rejected
constexpr double kRingRadiusFactor = 0.45;  // of scene_extent
constexpr double kNoiseModLo = 0.3;         // per-pixel noise-scale modulation range
constexpr double kNoiseModHi = 4.0;

struct HeightField {
  // z = sum_k amp[k] * sin(freq[k] . (x, y) + phase[k])
  std::array<Eigen::Vector2d, kNumSinusoids> freq;
  std::array<double, kNumSinusoids> amp{};
  std::array<double, kNumSinusoids> phase{};

  double operator()(double x, double y) const {
    double z = 0.0;
    for (int k = 0; k < kNumSinusoids; ++k) {
      z += amp[k] * std::sin(freq[k].x() * x + freq[k].y() * y + phase[k]);
    }
    return z;
  }
  double amplitude_sum() const {
    double s = 0.0;
    for (double a : amp) s += a;
    return s;
  }
  double slope_bound() const {
    double s = 0.0;
    for (int k = 0; k < kNumSinusoids; ++k) s += amp[k] * freq[k].norm();
    return s;
  }
  void rescale(double factor) {
    for (double& a : amp) a *= factor;
  }
};

struct CameraSetup {
  PoseSE3 pose;
  double focal = 0.0;
};

CameraSetup place_camera(const SceneConfig& cfg, int view) {
  const std::uint64_t seed = cfg.seed;
  CameraSetup cam;
  cam.focal = rng::uniform(rng::hash({seed, kFocal, static_cast<std::uint64_t>(view)}),
                           cfg.focal_min, cfg.focal_max);

  const double diag = 0.5 * std::hypot(static_cast<double>(cfg.width),
                                       static_cast<double>(cfg.height));
  const double half_fov = std::atan(diag / cam.focal);
  const double min_elevation = half_fov + kDownMargin;
  if (min_elevation >= kMaxElevation) {
    throw InvalidInputError("generate_scene: field of view too wide for a downward-looking ring "
                            "(focal too short for the image size)");
  }

  const std::uint64_t v = static_cast<std::uint64_t>(view);
  const double angle =
      2.0 * M_PI * view / cfg.num_views +
      rng::uniform(rng::hash({seed, kRingAngle, v}), -0.3, 0.3) * 2.0 * M_PI / cfg.num_views;
  const double radius = kRingRadiusFactor * cfg.scene_extent *
                        (1.0 + rng::uniform(rng::hash({seed, kRingRadius, v}), -0.15, 0.15));
  const double elevation =
      std::min(min_elevation + rng::uniform(rng::hash({seed, kRingElevation, v}), 0.02, 0.30),
               kMaxElevation);
  const Vec3 target(0.08 * cfg.scene_extent *
                        rng::uniform(rng::hash({seed, kTarget, v, 0}), -1.0, 1.0),
                    0.08 * cfg.scene_extent *
                        rng::uniform(rng::hash({seed, kTarget, v, 1}), -1.0, 1.0),
                    0.0);
  const Vec3 center = target + Vec3(radius * std::cos(angle), radius * std::sin(angle),
                                    radius * std::tan(elevation));

  const Vec3 forward = (target - center).normalized();
  const Vec3 x_axis = forward.cross(Vec3(0.0, 0.0, 1.0)).normalized();
  const Vec3 y_axis = forward.cross(x_axis);
  Mat3 rot;
  rot.col(0) = x_axis;
  rot.col(1) = y_axis;
  rot.col(2) = forward;
  cam.pose.rotation = rot;
  cam.pose.translation = center;
  return cam;
}

Vec3 pixel_direction(const CameraSetup& cam, const SceneConfig& cfg, double u, double v) {
  const Vec3 dir_cam((u - 0.5 * cfg.width) / cam.focal, (v - 0.5 * cfg.height) / cam.focal, 1.0);
  return cam.pose.rotation * dir_cam;
}

/// Conservative lower bound on tan(downward angle) over all pixel rays of all
/// cameras; positive iff every ray points below the horizon.
double min_ray_steepness(const std::vector<CameraSetup>& cams, const SceneConfig& cfg) {
  double steepness = std::numeric_limits<double>::infinity();
  for (const CameraSetup& cam : cams) {
    double min_down = std::numeric_limits<double>::infinity();
    double max_lateral = 0.0;
    for (int cu = 0; cu < 2; ++cu) {
      for (int cv = 0; cv < 2; ++cv) {
        const Vec3 d = pixel_direction(cam, cfg, cu ? cfg.width - 1.0 : 0.0,
                                       cv ? cfg.height - 1.0 : 0.0);
        min_down = std::min(min_down, -d.z());
        max_lateral = std::max(max_lateral, d.head<2>().norm());
      }
    }
    if (!(min_down > 0.0)) return 0.0;
    steepness = std::min(steepness, min_down / std::max(max_lateral, 1e-12));
  }
  return steepness;
}

HeightField make_height_field(const SceneConfig& cfg, double slope_cap, double height_cap) {
  HeightField field;
  for (int k = 0; k < kNumSinusoids; ++k) {
    const std::uint64_t ku = static_cast<std::uint64_t>(k);
    const double direction = rng::uniform(rng::hash({cfg.seed, kSurface, ku, 0}), 0.0, 2.0 * M_PI);
    const double wavelength =
        cfg.scene_extent * rng::uniform(rng::hash({cfg.seed, kSurface, ku, 1}), 0.8, 2.5);
    const double omega = 2.0 * M_PI / wavelength;
    field.freq[k] = omega * Eigen::Vector2d(std::cos(direction), std::sin(direction));
    field.phase[k] = rng::uniform(rng::hash({cfg.seed, kSurface, ku, 2}), 0.0, 2.0 * M_PI);
    field.amp[k] =
        cfg.scene_extent * rng::uniform(rng::hash({cfg.seed, kSurface, ku, 3}), 0.01, 0.05);
  }
  if (field.slope_bound() > slope_cap) {
    field.rescale(slope_cap / field.slope_bound());
  }
  if (field.amplitude_sum() > height_cap) {
    field.rescale(height_cap / field.amplitude_sum());
  }
  return field;
}

/// Intersects a downward pixel ray with the height field by bisection; the
/// slope cap makes f(t) = ray_z(t) - H(ray_xy(t)) strictly decreasing, so the
/// root is unique. Returns the depth t (camera-frame z) or a negative value
/// when bracketing fails.
double cast_ray(const Vec3& origin, const Vec3& dir, const HeightField& field, double extent) {
  auto f = [&](double t) {
    const double x = origin.x() + t * dir.x();
    const double y = origin.y() + t * dir.y();
    return origin.z() + t * dir.z() - field(x, y);
  };
  if (!(dir.z() < 0.0)) return -1.0;
  const double t_max = (origin.z() + field.amplitude_sum() + 0.1 * extent) / (-dir.z());
  if (!(f(0.0) > 0.0) || !(f(t_max) < 0.0)) return -1.0;
  double lo = 0.0, hi = t_max;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void validate_scene_config(const SceneConfig& config) {
  if (config.num_views < 2) throw InvalidInputError("scene config: num_views must be >= 2");
  if (config.width < 8 || config.height < 6) {
    throw InvalidInputError("scene config: resolution must be at least 8x6");
  }
  if (!(config.focal_min > 0.0) || !(config.focal_max >= config.focal_min)) {
    throw InvalidInputError("scene config: focal range must be positive with min <= max");
  }
  if (config.num_surface_points <= 0) {
    throw InvalidInputError("scene config: num_surface_points must be positive");
  }
  if (!(config.scene_extent > 0.0)) {
    throw InvalidInputError("scene config: scene_extent must be positive");
  }
}

double ConfidenceModel::operator()(double noise_scale) const {
  return std::clamp(base + gain / (noise_scale + offset), floor, ceil);
}

void validate_noise_model(const NoiseModel& noise) {
  if (!(noise.depth_noise_rel >= 0.0)) {
    throw InvalidInputError("noise model: depth_noise_rel must be non-negative");
  }
  if (!(noise.outlier_fraction >= 0.0) || noise.outlier_fraction >= 1.0) {
    throw InvalidInputError("noise model: outlier_fraction must be in [0, 1)");
  }
  if (!(noise.outlier_magnitude_rel >= 0.0)) {
    throw InvalidInputError("noise model: outlier_magnitude_rel must be non-negative");
  }
  if (!(noise.conf_model.offset > 0.0) || !(noise.conf_model.floor > 0.0) ||
      !(noise.conf_model.ceil >= noise.conf_model.floor)) {
    throw InvalidInputError("noise model: invalid confidence model parameters");
  }
}

int SyntheticScene::pair_index(int i, int j, int num_views) {
  return i * (num_views - 1) + (j < i ? j : j - 1);
}

std::vector<std::pair<int, int>> all_directed_pairs(int num_views) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(num_views) * (num_views - 1));
  for (int i = 0; i < num_views; ++i) {
    for (int j = 0; j < num_views; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

SyntheticScene generate_scene(const SceneConfig& config) {
  validate_scene_config(config);

  std::vector<CameraSetup> cams;
  cams.reserve(config.num_views);
  double min_cam_z = std::numeric_limits<double>::infinity();
  for (int v = 0; v < config.num_views; ++v) {
    cams.push_back(place_camera(config, v));
    min_cam_z = std::min(min_cam_z, cams.back().pose.translation.z());
  }
  const double steepness = min_ray_steepness(cams, config);
  if (!(steepness > 0.0)) {
    throw InvalidInputError("generate_scene: some pixel rays do not point below the horizon");
  }

  // Two attempts: the sinusoid field first, then the flat-plane fallback.
  for (int attempt = 0; attempt < 2; ++attempt) {
    HeightField field = make_height_field(config, 0.5 * steepness, 0.2 * min_cam_z);
    if (attempt == 1) field.rescale(0.0);  // fallback surface: plane at mean depth

    SyntheticScene scene;
    scene.config = config;
    bool ok = true;
    for (int v = 0; v < config.num_views && ok; ++v) {
      scene.poses.push_back(cams[v].pose);
      scene.focals.push_back(cams[v].focal);
      PointMap pts = PointMap::zeros(config.width, config.height);
      for (int vv = 0; vv < config.height && ok; ++vv) {
        for (int u = 0; u < config.width; ++u) {
          const Vec3 dir = pixel_direction(cams[v], config, u, vv);
          const double depth =
              cast_ray(cams[v].pose.translation, dir, field, config.scene_extent);
          if (!(depth > 0.0) || !std::isfinite(depth)) {
            ok = false;
            break;
          }
          const Vec3 dir_cam((u - 0.5 * config.width) / cams[v].focal,
                             (vv - 0.5 * config.height) / cams[v].focal, 1.0);
          pts.points.col(vv * config.width + u) = depth * dir_cam;
        }
      }
      scene.view_points.push_back(std::move(pts));
    }
    if (!ok) continue;

    for (const auto& [i, j] : all_directed_pairs(config.num_views)) {
      const PoseSE3 rel = scene.poses[i].inverse() * scene.poses[j];
      PointMap cross = PointMap::zeros(config.width, config.height);
      for (int px = 0; px < cross.size(); ++px) {
        cross.points.col(px) = rel.apply(scene.view_points[j].col(px));
      }
      scene.pair_cross.push_back(std::move(cross));
    }

    scene.surface_samples.reserve(config.num_surface_points);
    for (int k = 0; k < config.num_surface_points; ++k) {
      const std::uint64_t ku = static_cast<std::uint64_t>(k);
      const double r = 0.55 * config.scene_extent *
                       std::sqrt(rng::u01(rng::hash({config.seed, kSurfaceSample, ku, 0})));
      const double phi =
          rng::uniform(rng::hash({config.seed, kSurfaceSample, ku, 1}), 0.0, 2.0 * M_PI);
      const double x = r * std::cos(phi);
      const double y = r * std::sin(phi);
      scene.surface_samples.emplace_back(x, y, field(x, y));
    }
    return scene;
  }
  throw InvalidStateError("generate_scene: ray casting failed even on the fallback plane");
}

RenderResult render_pair_predictions(const SyntheticScene& scene, const NoiseModel& noise,
                                     std::uint64_t seed) {
  validate_noise_model(noise);
  const SceneConfig& cfg = scene.config;
  const int n = cfg.num_views;
  const int pixels = cfg.width * cfg.height;

  RenderResult out;
  const auto pairs = all_directed_pairs(n);
  out.predictions.reserve(pairs.size());
  out.outlier_pixels.resize(pairs.size());

  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto [i, j] = pairs[q];
    const std::uint64_t qu = static_cast<std::uint64_t>(q);
    PairPrediction pred;
    pred.view_src = i;
    pred.view_tgt = j;
    pred.points_src = PointMap::zeros(cfg.width, cfg.height);
    pred.points_tgt = PointMap::zeros(cfg.width, cfg.height);
    pred.conf_src = ScalarMap::constant(cfg.width, cfg.height, 0.0);
    pred.conf_tgt = ScalarMap::constant(cfg.width, cfg.height, 0.0);

    const PoseSE3 rel = scene.poses[i].inverse() * scene.poses[j];

    // grid slot 0: view i's own points; grid slot 1: view j's points, which
    // are perturbed in frame j and then mapped into frame i.
    for (int slot = 0; slot < 2; ++slot) {
      const std::uint64_t su = static_cast<std::uint64_t>(slot);
      const PointMap& base = slot == 0 ? scene.view_points[i] : scene.view_points[j];
      PointMap& pts = slot == 0 ? pred.points_src : pred.points_tgt;
      ScalarMap& conf = slot == 0 ? pred.conf_src : pred.conf_tgt;
      for (int px = 0; px < pixels; ++px) {
        const std::uint64_t pu = static_cast<std::uint64_t>(px);
        const double modulation = std::exp(rng::uniform(
            rng::hash({seed, kNoiseScale, qu, su, pu}), std::log(kNoiseModLo),
            std::log(kNoiseModHi)));
        const double sigma_px = noise.depth_noise_rel * modulation;
        Vec3 p = base.col(px);
        if (sigma_px > 0.0) {
          const double eps = sigma_px * rng::normal(rng::hash({seed, kDepthNoise, qu, su, pu, 0}),
                                                    rng::hash({seed, kDepthNoise, qu, su, pu, 1}));
          p *= std::exp(eps);
        }
        if (slot == 1) p = rel.apply(p);
        pts.points.col(px) = p;
        conf.values[px] = noise.conf_model(sigma_px);
      }
    }

    // Exactly floor(outlier_fraction * H * W) displaced pixels in the
    // cross-view grid. Both the pixel set and the displacement vector are
    // keyed by the target view: a hard-to-predict region of view j is placed
    // at the same wrong 3D location by every pair that predicts it. That is
    // the correlated, consistently-overconfident failure mode the
    // calibration has to survive; per-pair random errors would already be
    // voted out by the unsquared-norm objective.
    const int num_outliers = static_cast<int>(noise.outlier_fraction * pixels);
    if (num_outliers > 0) {
      const std::uint64_t ju = static_cast<std::uint64_t>(j);
      std::vector<int> order(pixels);
      for (int px = 0; px < pixels; ++px) order[px] = px;
      for (int k = 0; k < num_outliers; ++k) {
        const std::uint64_t span = static_cast<std::uint64_t>(pixels - k);
        const int pick =
            k + static_cast<int>(rng::hash({seed, kOutlierSelect, ju,
                                            static_cast<std::uint64_t>(k)}) % span);
        std::swap(order[k], order[pick]);
      }
      order.resize(num_outliers);
      std::sort(order.begin(), order.end());

      double clean_p90 = 0.0, clean_max = 0.0;
      if (noise.overconfident) {
        std::vector<char> is_outlier(pixels, 0);
        for (int px : order) is_outlier[px] = 1;
        std::vector<double> clean;
        clean.reserve(pixels - num_outliers);
        for (int px = 0; px < pixels; ++px) {
          if (!is_outlier[px]) clean.push_back(pred.conf_tgt.values[px]);
        }
        std::sort(clean.begin(), clean.end());
        clean_p90 = clean[static_cast<std::size_t>(0.9 * (clean.size() - 1))];
        clean_max = clean.back();
      }

      const double magnitude = noise.outlier_magnitude_rel * cfg.scene_extent;
      for (int px : order) {
        const std::uint64_t pu = static_cast<std::uint64_t>(px);
        // Direction drawn per (view, pixel) in the target view's frame, so
        // the displaced point is the same across all pairs observing it.
        Vec3 dir(rng::normal(rng::hash({seed, kOutlierDirection, ju, pu, 0}),
                             rng::hash({seed, kOutlierDirection, ju, pu, 1})),
                 rng::normal(rng::hash({seed, kOutlierDirection, ju, pu, 2}),
                             rng::hash({seed, kOutlierDirection, ju, pu, 3})),
                 rng::normal(rng::hash({seed, kOutlierDirection, ju, pu, 4}),
                             rng::hash({seed, kOutlierDirection, ju, pu, 5})));
        if (dir.norm() < 1e-12) dir = Vec3(0.0, 0.0, 1.0);
        pred.points_tgt.points.col(px) += rel.rotation * (magnitude * dir.normalized());
        if (noise.overconfident) {
          pred.conf_tgt.values[px] = rng::uniform(
              rng::hash({seed, kOutlierConfidence, qu, pu}), clean_p90, clean_max);
        } else {
          const double rel_scale =
              magnitude / std::max(scene.view_points[j].col(px).norm(), 1e-9);
          pred.conf_tgt.values[px] = noise.conf_model(rel_scale);
        }
      }
      out.outlier_pixels[q] = std::move(order);
    }
    out.predictions.push_back(std::move(pred));
  }
  return out;
}

GlobalState ground_truth_state(const SyntheticScene& scene, const ViewGraph& graph) {
  GlobalState state;
  state.poses = scene.poses;
  state.focals = scene.focals;
  state.depths.reserve(scene.view_points.size());
  for (const PointMap& pts : scene.view_points) {
    DepthMap d = ScalarMap::constant(pts.width, pts.height, 0.0);
    d.values = pts.points.row(2).transpose().array();
    state.depths.push_back(std::move(d));
  }
  state.edge_poses.reserve(graph.predictions().size());
  state.edge_scales.assign(graph.predictions().size(), 1.0);
  for (const PairPrediction& p : graph.predictions()) {
    state.edge_poses.push_back(scene.poses[p.view_src]);
  }
  return state;
}

Trajectory ground_truth_trajectory(const SyntheticScene& scene) {
  Trajectory t;
  for (std::size_t v = 0; v < scene.poses.size(); ++v) {
    t.ids.push_back(static_cast<int>(v));
    t.poses.push_back(scene.poses[v]);
  }
  return t;
}

}  // namespace mvalign
