#include "mvalign/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace mvalign {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string pair_tag(int src, int tgt) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%03d_%03d", src, tgt);
  return buf;
}

std::string view_tag(const char* stem, int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", stem, v);
  return buf;
}

struct AlignedData {
  std::vector<PoseSE3> poses;
  std::vector<double> focals;
  std::vector<DepthMap> depths;
  WeightMaps weights;
};

AlignedData load_aligned(const fs::path& dir, const ViewGraph& graph) {
  AlignedData out;
  const int n = graph.num_views();
  for (int v = 0; v < n; ++v) {
    out.poses.push_back(pose_from_tensor(read_tensor(dir / "poses" / view_tag("pose", v))));
    out.depths.push_back(
        scalar_map_from_tensor(read_tensor(dir / "depths" / view_tag("depth", v))));
  }
  json focals;
  try {
    focals = json::parse(read_file(dir / "focals.json"));
    out.focals = focals.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("focals.json: ") + e.what());
  }
  if (static_cast<int>(out.focals.size()) != n) {
    throw IoError("focals.json does not cover every view");
  }
  for (const PairPrediction& p : graph.predictions()) {
    WeightMaps::Entry e;
    const std::string tag = pair_tag(p.view_src, p.view_tgt);
    e.src = scalar_map_from_tensor(read_tensor(dir / "weights" / (tag + "_src")));
    e.tgt = scalar_map_from_tensor(read_tensor(dir / "weights" / (tag + "_tgt")));
    out.weights.entries.push_back(std::move(e));
  }
  return out;
}

/// Per-pixel Euclidean errors after re-scaling the prediction by the ratio of
/// mean point norms, the same alignment avg_point_error uses.
std::vector<double> aligned_error_map(const PointMap& pred, const PointMap& gt) {
  double z_pred = 0.0, z_gt = 0.0;
  for (int p = 0; p < pred.size(); ++p) {
    z_pred += pred.col(p).norm();
    z_gt += gt.col(p).norm();
  }
  const double rescale = z_pred > 0.0 ? z_gt / z_pred : 1.0;
  std::vector<double> errors(pred.size());
  for (int p = 0; p < pred.size(); ++p) {
    errors[p] = (rescale * pred.col(p) - gt.col(p)).norm();
  }
  return errors;
}

std::vector<PointMap> back_project_views(const std::vector<PoseSE3>& poses,
                                         const std::vector<double>& focals,
                                         const std::vector<DepthMap>& depths) {
  std::vector<PointMap> maps;
  maps.reserve(poses.size());
  for (std::size_t v = 0; v < poses.size(); ++v) {
    CameraIntrinsics intr{focals[v], depths[v].width, depths[v].height};
    maps.push_back(back_project(depths[v], intr, poses[v]));
  }
  return maps;
}

json labeled_or_null(double value, bool defined) {
  return defined ? json(value) : json(nullptr);
}

}  // namespace

SceneConfig scene_config_from_json(const json& doc) {
  SceneConfig cfg;
  if (doc.contains("num_views")) cfg.num_views = doc.at("num_views").get<int>();
  if (doc.contains("width")) cfg.width = doc.at("width").get<int>();
  if (doc.contains("height")) cfg.height = doc.at("height").get<int>();
  if (doc.contains("focal_range")) {
    const auto range = doc.at("focal_range").get<std::vector<double>>();
    if (range.size() != 2) {
      throw InvalidInputError("scene config: focal_range must be [min, max]");
    }
    cfg.focal_min = range[0];
    cfg.focal_max = range[1];
  }
  if (doc.contains("num_surface_points")) {
    cfg.num_surface_points = doc.at("num_surface_points").get<int>();
  }
  if (doc.contains("scene_extent")) cfg.scene_extent = doc.at("scene_extent").get<double>();
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  validate_scene_config(cfg);
  return cfg;
}

NoiseModel noise_model_from_json(const json& doc) {
  NoiseModel noise;
  if (doc.contains("depth_noise_rel")) {
    noise.depth_noise_rel = doc.at("depth_noise_rel").get<double>();
  }
  if (doc.contains("outlier_fraction")) {
    noise.outlier_fraction = doc.at("outlier_fraction").get<double>();
  }
  if (doc.contains("outlier_magnitude_rel")) {
    noise.outlier_magnitude_rel = doc.at("outlier_magnitude_rel").get<double>();
  }
  if (doc.contains("overconfident")) noise.overconfident = doc.at("overconfident").get<bool>();
  if (doc.contains("conf_model")) {
    const json& cm = doc.at("conf_model");
    if (cm.contains("base")) noise.conf_model.base = cm.at("base").get<double>();
    if (cm.contains("gain")) noise.conf_model.gain = cm.at("gain").get<double>();
    if (cm.contains("offset")) noise.conf_model.offset = cm.at("offset").get<double>();
    if (cm.contains("floor")) noise.conf_model.floor = cm.at("floor").get<double>();
    if (cm.contains("ceil")) noise.conf_model.ceil = cm.at("ceil").get<double>();
  }
  validate_noise_model(noise);
  return noise;
}

json to_json(const SceneConfig& config) {
  return json{{"num_views", config.num_views},
              {"width", config.width},
              {"height", config.height},
              {"focal_range", {config.focal_min, config.focal_max}},
              {"num_surface_points", config.num_surface_points},
              {"scene_extent", config.scene_extent},
              {"seed", config.seed}};
}

json to_json(const NoiseModel& noise) {
  return json{{"depth_noise_rel", noise.depth_noise_rel},
              {"outlier_fraction", noise.outlier_fraction},
              {"outlier_magnitude_rel", noise.outlier_magnitude_rel},
              {"overconfident", noise.overconfident},
              {"conf_model",
               {{"base", noise.conf_model.base},
                {"gain", noise.conf_model.gain},
                {"offset", noise.conf_model.offset},
                {"floor", noise.conf_model.floor},
                {"ceil", noise.conf_model.ceil}}}};
}

void run_simulate(const SceneConfig& config, const NoiseModel& noise, std::uint64_t seed,
                  const fs::path& out_dir) {
  SceneConfig cfg = config;
  cfg.seed = seed;
  const SyntheticScene scene = generate_scene(cfg);
  RenderResult render = render_pair_predictions(scene, noise, seed);

  SceneData data;
  data.num_views = cfg.num_views;
  for (int v = 0; v < cfg.num_views; ++v) {
    data.views.push_back({v, cfg.width, cfg.height});
  }
  data.predictions = std::move(render.predictions);

  GroundTruthData gt;
  gt.poses = scene.poses;
  gt.focals = scene.focals;
  for (const PairPrediction& p : data.predictions) {
    gt.pair_src.push_back(scene.pair_src(p.view_src));
    gt.pair_tgt.push_back(scene.pair_tgt(p.view_src, p.view_tgt));
  }
  gt.scene_extent = cfg.scene_extent;
  data.ground_truth = std::move(gt);

  save_scene(out_dir, data);
}

OptimizeResult run_align(const fs::path& manifest_path, const AlignConfig& config,
                         const fs::path& out_dir) {
  validate_config(config);
  SceneData scene = load_scene(manifest_path);
  const ViewGraph graph = build_view_graph(std::move(scene.predictions), scene.num_views);
  const PairwiseEstimates estimates = compute_pairwise_estimates(graph);
  const SpanningTree tree = extract_spanning_tree(graph);
  const GlobalState init = propagate_initialization(graph, tree, estimates);
  OptimizeResult result = optimize(init, graph, config);

  for (int v = 0; v < graph.num_views(); ++v) {
    write_tensor(out_dir / "poses" / view_tag("pose", v), to_tensor(result.state.poses[v]));
    write_tensor(out_dir / "depths" / view_tag("depth", v), to_tensor(result.state.depths[v]));
  }
  atomic_write_file(out_dir / "focals.json", json(result.state.focals).dump(2) + "\n");
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const std::string tag = pair_tag(p.view_src, p.view_tgt);
    write_tensor(out_dir / "weights" / (tag + "_src"), to_tensor(result.weights.entries[k].src));
    write_tensor(out_dir / "weights" / (tag + "_tgt"), to_tensor(result.weights.entries[k].tgt));
  }
  atomic_write_file(out_dir / "objective_trace.json", json(result.objective_trace).dump() + "\n");
  atomic_write_file(out_dir / "summary.json",
                    json{{"initial_objective", result.objective_trace.front()},
                         {"final_objective", result.best_objective},
                         {"steps", config.steps},
                         {"robust", config.robust},
                         {"scale_product", edge_scale_product(result.state)}}
                            .dump(2) +
                        "\n");

  std::vector<Vec3> cloud;
  for (const PointMap& m :
       back_project_views(result.state.poses, result.state.focals, result.state.depths)) {
    for (int p = 0; p < m.size(); ++p) cloud.push_back(m.col(p));
  }
  write_ply(out_dir / "cloud.ply", cloud);
  return result;
}

void run_pseudo_label(const fs::path& manifest_path, const fs::path& aligned_dir, double cutoff,
                      const fs::path& out_dir) {
  SceneData scene = load_scene(manifest_path);
  const ViewGraph graph = build_view_graph(std::move(scene.predictions), scene.num_views);
  const AlignedData aligned = load_aligned(aligned_dir, graph);

  // Labels depend only on poses, focals and depths; edge transforms are not
  // part of the labeling rule.
  GlobalState state;
  state.poses = aligned.poses;
  state.focals = aligned.focals;
  state.depths = aligned.depths;
  const PseudoLabelSet labels = generate_pseudo_labels(state, aligned.weights, graph, cutoff);

  long total = 0, retained = 0;
  for (std::size_t k = 0; k < labels.entries.size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const std::string tag = "pairs/" + pair_tag(p.view_src, p.view_tgt);
    const PseudoLabelSet::Entry& e = labels.entries[k];
    write_tensor(out_dir / tag / "labels_src", to_tensor(e.labels_src));
    write_tensor(out_dir / tag / "mask_src", to_tensor(e.mask_src));
    write_tensor(out_dir / tag / "labels_tgt", to_tensor(e.labels_tgt));
    write_tensor(out_dir / tag / "mask_tgt", to_tensor(e.mask_tgt));
    total += e.mask_src.size() + e.mask_tgt.size();
    retained += e.mask_src.count() + e.mask_tgt.count();
  }
  atomic_write_file(
      out_dir / "summary.json",
      json{{"total_pixels", total},
           {"retained", retained},
           {"fraction_retained",
            total > 0 ? static_cast<double>(retained) / static_cast<double>(total) : 0.0}}
              .dump(2) +
          "\n");
}

RefinedPairMaps refined_pair_maps(const std::vector<PoseSE3>& poses,
                                  const std::vector<double>& focals,
                                  const std::vector<DepthMap>& depths, const ViewGraph& graph) {
  const std::vector<PointMap> global_maps = back_project_views(poses, focals, depths);
  RefinedPairMaps out;
  out.entries.resize(graph.predictions().size());
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    const PoseSE3 to_pair = poses[p.view_src].inverse();
    auto transform = [&](int view) {
      const PointMap& g = global_maps[view];
      PointMap m = PointMap::zeros(g.width, g.height);
      for (int px = 0; px < g.size(); ++px) m.points.col(px) = to_pair.apply(g.col(px));
      return m;
    };
    out.entries[k].src = transform(p.view_src);
    out.entries[k].tgt = transform(p.view_tgt);
  }
  return out;
}

RefinedPairMaps refined_pair_maps(const GlobalState& state, const ViewGraph& graph) {
  return refined_pair_maps(state.poses, state.focals, state.depths, graph);
}

double mean_avg_point_error(const RefinedPairMaps& refined, const GroundTruthData& gt) {
  double total = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < refined.entries.size(); ++k) {
    const MaskMap all_src = MaskMap::constant(gt.pair_src[k].width, gt.pair_src[k].height, true);
    const MaskMap all_tgt = MaskMap::constant(gt.pair_tgt[k].width, gt.pair_tgt[k].height, true);
    total += avg_point_error(refined.entries[k].src, all_src, gt.pair_src[k], all_src);
    total += avg_point_error(refined.entries[k].tgt, all_tgt, gt.pair_tgt[k], all_tgt);
    count += 2;
  }
  return total / static_cast<double>(count);
}

PooledPixelScores pooled_pixel_scores(const ViewGraph& graph, const WeightMaps& weights,
                                      const GroundTruthData& gt) {
  PooledPixelScores out;
  for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
    const PairPrediction& p = graph.predictions()[k];
    auto pool = [&](const PointMap& pred_pts, const PointMap& gt_pts, const ScalarMap& conf,
                    const ScalarMap& weight) {
      const std::vector<double> errors = aligned_error_map(pred_pts, gt_pts);
      for (int px = 0; px < pred_pts.size(); ++px) {
        out.weight.push_back(weight.values[px]);
        out.raw_conf.push_back(conf.values[px]);
        out.neg_error.push_back(-errors[px]);
      }
    };
    pool(p.points_src, gt.pair_src[k], p.conf_src, weights.entries[k].src);
    pool(p.points_tgt, gt.pair_tgt[k], p.conf_tgt, weights.entries[k].tgt);
  }
  return out;
}

LabelErrorStats label_error_stats(const RefinedPairMaps& refined, const PseudoLabelSet& labels,
                                  const GroundTruthData& gt) {
  LabelErrorStats stats;
  double retained_sum = 0.0, rejected_sum = 0.0;
  for (std::size_t k = 0; k < refined.entries.size(); ++k) {
    auto split = [&](const PointMap& pred_pts, const PointMap& gt_pts, const MaskMap& mask) {
      const std::vector<double> errors = aligned_error_map(pred_pts, gt_pts);
      for (int px = 0; px < pred_pts.size(); ++px) {
        if (mask.at(px)) {
          retained_sum += errors[px];
          ++stats.retained;
        } else {
          rejected_sum += errors[px];
          ++stats.rejected;
        }
      }
    };
    split(refined.entries[k].src, gt.pair_src[k], labels.entries[k].mask_src);
    split(refined.entries[k].tgt, gt.pair_tgt[k], labels.entries[k].mask_tgt);
  }
  stats.retained_mean_error = stats.retained > 0 ? retained_sum / stats.retained : 0.0;
  stats.rejected_mean_error = stats.rejected > 0 ? rejected_sum / stats.rejected : 0.0;
  stats.retained_fraction =
      static_cast<double>(stats.retained) / static_cast<double>(stats.retained + stats.rejected);
  return stats;
}

std::vector<Vec3> ground_truth_cloud(const ViewGraph& graph, const GroundTruthData& gt) {
  std::vector<Vec3> cloud;
  for (int v = 0; v < graph.num_views(); ++v) {
    // Prefer a prediction sourced at the view; any choice is consistent.
    for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
      const PairPrediction& p = graph.predictions()[k];
      const bool as_src = p.view_src == v;
      if (!as_src && p.view_tgt != v) continue;
      const PointMap& pts = as_src ? gt.pair_src[k] : gt.pair_tgt[k];
      const PoseSE3& frame_pose = gt.poses[p.view_src];
      for (int px = 0; px < pts.size(); ++px) cloud.push_back(frame_pose.apply(pts.col(px)));
      break;
    }
  }
  return cloud;
}

json run_evaluate(const fs::path& manifest_path, const fs::path& aligned_dir,
                  const std::optional<fs::path>& labels_dir, const fs::path& metrics_path) {
  SceneData scene = load_scene(manifest_path);
  if (!scene.ground_truth) {
    throw MissingGroundTruthError("evaluate: manifest " + manifest_path.string() +
                                  " carries no ground truth");
  }
  const GroundTruthData gt = std::move(*scene.ground_truth);
  const ViewGraph graph = build_view_graph(std::move(scene.predictions), scene.num_views);
  const AlignedData aligned = load_aligned(aligned_dir, graph);

  Trajectory est, gt_traj;
  for (int v = 0; v < graph.num_views(); ++v) {
    est.ids.push_back(v);
    est.poses.push_back(aligned.poses[v]);
    gt_traj.ids.push_back(v);
    gt_traj.poses.push_back(gt.poses[v]);
  }

  // The reconstruction lives in its own gauge; similarity-align the camera
  // positions to the ground-truth ones and carry the fused cloud along before
  // the nearest-neighbor comparison.
  std::vector<Vec3> est_positions, gt_positions;
  std::vector<double> unit_weights;
  for (int v = 0; v < graph.num_views(); ++v) {
    est_positions.push_back(aligned.poses[v].translation);
    gt_positions.push_back(gt.poses[v].translation);
    unit_weights.push_back(1.0);
  }
  const SimilarityTransform gauge = align_similarity(est_positions, gt_positions, unit_weights);
  std::vector<Vec3> recon;
  for (const PointMap& m : back_project_views(aligned.poses, aligned.focals, aligned.depths)) {
    for (int p = 0; p < m.size(); ++p) {
      recon.push_back(gauge.scale * (gauge.rotation * Vec3(m.col(p)) + gauge.translation));
    }
  }
  const AccuracyCompleteness ac = accuracy_completeness(recon, ground_truth_cloud(graph, gt));

  const RefinedPairMaps refined = refined_pair_maps(aligned.poses, aligned.focals, aligned.depths, graph);
  const PooledPixelScores scores = pooled_pixel_scores(graph, aligned.weights, gt);

  double sp_weight = std::numeric_limits<double>::quiet_NaN();
  double sp_conf = std::numeric_limits<double>::quiet_NaN();
  bool sp_defined = true;
  try {
    sp_weight = spearman(scores.weight, scores.neg_error);
    sp_conf = spearman(scores.raw_conf, scores.neg_error);
  } catch (const UndefinedCorrelationError&) {
    sp_defined = false;
  }

  json metrics;
  metrics["ate"] = ate(est, gt_traj);
  metrics["afe_percent"] = afe(aligned.focals, gt.focals);
  metrics["accuracy"] = ac.accuracy;
  metrics["completeness"] = ac.completeness;
  metrics["avg_point_error"] = mean_avg_point_error(refined, gt);
  metrics["spearman_weight_vs_neg_error"] = labeled_or_null(sp_weight, sp_defined);
  metrics["spearman_rawconf_vs_neg_error"] = labeled_or_null(sp_conf, sp_defined);
  metrics["label_retained_mean_error"] = nullptr;
  metrics["label_rejected_mean_error"] = nullptr;
  metrics["label_retained_fraction"] = nullptr;

  if (labels_dir) {
    PseudoLabelSet labels;
    labels.entries.resize(graph.predictions().size());
    for (std::size_t k = 0; k < graph.predictions().size(); ++k) {
      const PairPrediction& p = graph.predictions()[k];
      const fs::path tag = *labels_dir / "pairs" / pair_tag(p.view_src, p.view_tgt);
      labels.entries[k].labels_src = point_map_from_tensor(read_tensor(tag / "labels_src"));
      labels.entries[k].mask_src = mask_map_from_tensor(read_tensor(tag / "mask_src"));
      labels.entries[k].labels_tgt = point_map_from_tensor(read_tensor(tag / "labels_tgt"));
      labels.entries[k].mask_tgt = mask_map_from_tensor(read_tensor(tag / "mask_tgt"));
    }
    const LabelErrorStats stats = label_error_stats(refined, labels, gt);
    metrics["label_retained_mean_error"] = labeled_or_null(stats.retained_mean_error, stats.retained > 0);
    metrics["label_rejected_mean_error"] = labeled_or_null(stats.rejected_mean_error, stats.rejected > 0);
    metrics["label_retained_fraction"] = stats.retained_fraction;
  }

  atomic_write_file(metrics_path, metrics.dump(2) + "\n");
  return metrics;
}

void run_pipeline(const PipelineOptions& options) {
  const fs::path sim_dir = options.out / "sim";
  run_simulate(options.scene, options.noise, options.seed, sim_dir);
  const fs::path manifest = sim_dir / "manifest.json";

  if (options.ab) {
    AlignConfig robust_cfg = options.align;
    robust_cfg.robust = true;
    AlignConfig plain_cfg = options.align;
    plain_cfg.robust = false;
    run_align(manifest, robust_cfg, options.out / "aligned_robust");
    run_align(manifest, plain_cfg, options.out / "aligned_plain");
    run_pseudo_label(manifest, options.out / "aligned_robust", options.cutoff,
                     options.out / "labels");
    run_evaluate(manifest, options.out / "aligned_robust", options.out / "labels",
                 options.out / "metrics_robust.json");
    run_evaluate(manifest, options.out / "aligned_plain", std::nullopt,
                 options.out / "metrics_plain.json");
  } else {
    run_align(manifest, options.align, options.out / "aligned");
    run_pseudo_label(manifest, options.out / "aligned", options.cutoff, options.out / "labels");
    run_evaluate(manifest, options.out / "aligned", options.out / "labels",
                 options.out / "metrics.json");
  }
}

void write_ply(const fs::path& path, const std::vector<Vec3>& points) {
  std::string body;
  body.reserve(points.size() * 40 + 256);
  body += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
          "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char line[96];
  for (const Vec3& p : points) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    body += line;
  }
  atomic_write_file(path, body);
}

}  // namespace mvalign
