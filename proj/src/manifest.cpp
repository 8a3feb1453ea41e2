#include "mvalign/manifest.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace mvalign {

namespace {

using nlohmann::json;

std::string pair_tag(int src, int tgt) {
  std::ostringstream oss;
  oss << "pair_" << std::setw(3) << std::setfill('0') << src << "_" << std::setw(3)
      << std::setfill('0') << tgt;
  return oss.str();
}

std::string view_tag(const char* stem, int v) {
  std::ostringstream oss;
  oss << stem << "_" << std::setw(3) << std::setfill('0') << v;
  return oss.str();
}

}  // namespace

SceneData load_scene(const std::filesystem::path& manifest_path) {
  const std::filesystem::path base = manifest_path.parent_path();
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("manifest " + manifest_path.string() + ": " + e.what());
  }

  SceneData scene;
  try {
    scene.num_views = doc.at("num_views").get<int>();
    for (const json& v : doc.at("views")) {
      scene.views.push_back({v.at("id").get<int>(), v.at("width").get<int>(),
                             v.at("height").get<int>()});
    }
    for (const json& p : doc.at("pairs")) {
      PairPrediction pred;
      pred.view_src = p.at("src").get<int>();
      pred.view_tgt = p.at("tgt").get<int>();
      pred.points_src = point_map_from_tensor(read_tensor(base / p.at("points_src").get<std::string>()));
      pred.points_tgt = point_map_from_tensor(read_tensor(base / p.at("points_tgt").get<std::string>()));
      pred.conf_src = scalar_map_from_tensor(read_tensor(base / p.at("conf_src").get<std::string>()));
      pred.conf_tgt = scalar_map_from_tensor(read_tensor(base / p.at("conf_tgt").get<std::string>()));
      scene.predictions.push_back(std::move(pred));
    }
    if (doc.contains("ground_truth")) {
      const json& gt = doc.at("ground_truth");
      GroundTruthData data;
      for (const json& path : gt.at("poses")) {
        data.poses.push_back(pose_from_tensor(read_tensor(base / path.get<std::string>())));
      }
      data.focals = gt.at("focals").get<std::vector<double>>();
      for (const json& p : gt.at("pairs")) {
        data.pair_src.push_back(
            point_map_from_tensor(read_tensor(base / p.at("points_src").get<std::string>())));
        data.pair_tgt.push_back(
            point_map_from_tensor(read_tensor(base / p.at("points_tgt").get<std::string>())));
      }
      data.scene_extent = gt.at("scene_extent").get<double>();
      if (data.pair_src.size() != scene.predictions.size()) {
        throw IoError("manifest: ground-truth pair count disagrees with predictions");
      }
      scene.ground_truth = std::move(data);
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + manifest_path.string() + ": " + e.what());
  }

  if (static_cast<int>(scene.views.size()) != scene.num_views) {
    throw IoError("manifest: views array does not match num_views");
  }
  for (const PairPrediction& pred : scene.predictions) {
    validate_prediction(pred);
    for (int side = 0; side < 2; ++side) {
      const int view = side == 0 ? pred.view_src : pred.view_tgt;
      if (view < 0 || view >= scene.num_views) {
        throw IoError("manifest: pair references unknown view " + std::to_string(view));
      }
      const ViewInfo& info = scene.views[view];
      if (pred.points_src.width != info.width || pred.points_src.height != info.height) {
        throw IoError("manifest: tensor dimensions disagree with the declared size of view " +
                      std::to_string(view));
      }
    }
  }
  return scene;
}

void save_scene(const std::filesystem::path& out_dir, const SceneData& scene) {
  json doc;
  doc["num_views"] = scene.num_views;
  json views = json::array();
  for (const ViewInfo& v : scene.views) {
    views.push_back({{"id", v.id}, {"width", v.width}, {"height", v.height}});
  }
  doc["views"] = views;

  json pairs = json::array();
  for (const PairPrediction& pred : scene.predictions) {
    const std::string tag = "pairs/" + pair_tag(pred.view_src, pred.view_tgt);
    write_tensor(out_dir / tag / "points_src", to_tensor(pred.points_src));
    write_tensor(out_dir / tag / "points_tgt", to_tensor(pred.points_tgt));
    write_tensor(out_dir / tag / "conf_src", to_tensor(pred.conf_src));
    write_tensor(out_dir / tag / "conf_tgt", to_tensor(pred.conf_tgt));
    pairs.push_back({{"src", pred.view_src},
                     {"tgt", pred.view_tgt},
                     {"points_src", tag + "/points_src"},
                     {"points_tgt", tag + "/points_tgt"},
                     {"conf_src", tag + "/conf_src"},
                     {"conf_tgt", tag + "/conf_tgt"}});
  }
  doc["pairs"] = pairs;

  if (scene.ground_truth) {
    const GroundTruthData& gt = *scene.ground_truth;
    json gt_doc;
    json pose_paths = json::array();
    for (std::size_t v = 0; v < gt.poses.size(); ++v) {
      const std::string tag = "gt/" + view_tag("pose", static_cast<int>(v));
      write_tensor(out_dir / tag, to_tensor(gt.poses[v]));
      pose_paths.push_back(tag);
    }
    gt_doc["poses"] = pose_paths;
    gt_doc["focals"] = gt.focals;
    json gt_pairs = json::array();
    for (std::size_t k = 0; k < scene.predictions.size(); ++k) {
      const PairPrediction& pred = scene.predictions[k];
      const std::string tag = "gt/" + pair_tag(pred.view_src, pred.view_tgt);
      write_tensor(out_dir / tag / "points_src", to_tensor(gt.pair_src[k]));
      write_tensor(out_dir / tag / "points_tgt", to_tensor(gt.pair_tgt[k]));
      gt_pairs.push_back({{"src", pred.view_src},
                          {"tgt", pred.view_tgt},
                          {"points_src", tag + "/points_src"},
                          {"points_tgt", tag + "/points_tgt"}});
    }
    gt_doc["pairs"] = gt_pairs;
    gt_doc["scene_extent"] = gt.scene_extent;
    doc["ground_truth"] = gt_doc;
  }

  atomic_write_file(out_dir / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace mvalign
