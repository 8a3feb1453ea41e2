#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mvalign/pairwise.hpp"
#include "mvalign/tensor_io.hpp"

namespace mvalign {

struct ViewInfo {
  int id = -1;
  int width = 0;
  int height = 0;
};

struct GroundTruthData {
  std::vector<PoseSE3> poses;          ///< per view, camera-to-world
  std::vector<double> focals;          ///< per view
  std::vector<PointMap> pair_src;      ///< per prediction: view src's points, frame src
  std::vector<PointMap> pair_tgt;      ///< per prediction: view tgt's points, frame src
  double scene_extent = 0.0;
};

/// Everything a manifest describes: views, directed predictions and optional
/// ground truth, in the manifest's pair order.
struct SceneData {
  int num_views = 0;
  std::vector<ViewInfo> views;
  std::vector<PairPrediction> predictions;
  std::optional<GroundTruthData> ground_truth;
};

/// Reads manifest.json and every referenced tensor. Tensor paths in the
/// manifest are interpreted relative to the manifest's directory.
SceneData load_scene(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus all tensors under `out_dir`.
void save_scene(const std::filesystem::path& out_dir, const SceneData& scene);

}  // namespace mvalign
