#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "mvalign/align.hpp"
#include "mvalign/manifest.hpp"
#include "mvalign/metrics.hpp"
#include "mvalign/pseudo_label.hpp"
#include "mvalign/simulator.hpp"

namespace mvalign {

// Config (de)serialization for the CLI. Unknown keys are ignored; focal_range
// is a two-element array [min, max].
SceneConfig scene_config_from_json(const nlohmann::json& doc);
NoiseModel noise_model_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SceneConfig& config);
nlohmann::json to_json(const NoiseModel& noise);

/// Generates a scene, fabricates predictions and writes the manifest, the
/// prediction tensors and the ground truth under `out_dir`.
void run_simulate(const SceneConfig& config, const NoiseModel& noise, std::uint64_t seed,
                  const std::filesystem::path& out_dir);

/// Loads a manifest, runs the full initialization + optimization and writes
/// poses, focals, depths, weights, the objective trace and a fused point
/// cloud under `out_dir`. Returns the in-memory result.
OptimizeResult run_align(const std::filesystem::path& manifest_path, const AlignConfig& config,
                         const std::filesystem::path& out_dir);

/// Loads aligned outputs and writes per-pair label and mask tensors plus a
/// retention summary under `out_dir`.
void run_pseudo_label(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& aligned_dir, double cutoff,
                      const std::filesystem::path& out_dir);

/// Computes the metric report against the manifest's ground truth and writes
/// it to `metrics_path`. Label statistics are null unless `labels_dir` is
/// given. Throws MissingGroundTruthError when the manifest has no ground
/// truth.
nlohmann::json run_evaluate(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& aligned_dir,
                            const std::optional<std::filesystem::path>& labels_dir,
                            const std::filesystem::path& metrics_path);

struct PipelineOptions {
  SceneConfig scene;
  NoiseModel noise;
  std::uint64_t seed = 0;
  AlignConfig align;
  double cutoff = 1.5;
  bool ab = false;  ///< also run the non-robust alignment and emit both metric files
  std::filesystem::path out;
};

/// simulate -> align -> pseudo-label -> evaluate under options.out.
void run_pipeline(const PipelineOptions& options);

// ---------------------------------------------------------------------------
// Evaluation helpers shared between `evaluate` and the test suites.

/// Refined per-pair maps: both views' back-projected points of each directed
/// prediction expressed in that prediction's source frame.
struct RefinedPairMaps {
  struct Entry {
    PointMap src, tgt;
  };
  std::vector<Entry> entries;
};

RefinedPairMaps refined_pair_maps(const std::vector<PoseSE3>& poses,
                                  const std::vector<double>& focals,
                                  const std::vector<DepthMap>& depths, const ViewGraph& graph);
RefinedPairMaps refined_pair_maps(const GlobalState& state, const ViewGraph& graph);

/// Mean of avg_point_error over every grid of every prediction.
double mean_avg_point_error(const RefinedPairMaps& refined, const GroundTruthData& gt);

/// Pooled per-pixel diagnostics over all grids: final weight, raw confidence
/// and the negative scale-aligned prediction error against ground truth.
struct PooledPixelScores {
  std::vector<double> weight, raw_conf, neg_error;
};
PooledPixelScores pooled_pixel_scores(const ViewGraph& graph, const WeightMaps& weights,
                                      const GroundTruthData& gt);

/// Mean scale-aligned error of refined points, split by the pseudo-label
/// masks into retained and rejected pixels.
struct LabelErrorStats {
  double retained_mean_error = 0.0;
  double rejected_mean_error = 0.0;
  double retained_fraction = 0.0;
  long retained = 0;
  long rejected = 0;
};
LabelErrorStats label_error_stats(const RefinedPairMaps& refined, const PseudoLabelSet& labels,
                                  const GroundTruthData& gt);

/// World-frame ground-truth cloud: every view's points mapped through its
/// ground-truth pose.
std::vector<Vec3> ground_truth_cloud(const ViewGraph& graph, const GroundTruthData& gt);

void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& points);

}  // namespace mvalign
