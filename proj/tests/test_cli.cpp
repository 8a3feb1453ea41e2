#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "mvalign/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mvalign_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const fs::path& capture_dir) {
  static int counter = 0;
  const fs::path log = capture_dir / ("cli_log_" + std::to_string(counter++) + ".txt");
  const std::string command =
      std::string(MVALIGN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  result.output = mvalign::read_file(log);
  return result;
}

void write_json(const fs::path& p, const json& doc) {
  std::ofstream out(p);
  out << doc.dump(2);
}

json default_scene() {
  return json{{"num_views", 3}, {"width", 16}, {"height", 12}, {"focal_range", {9.0, 14.0}},
              {"num_surface_points", 300}, {"scene_extent", 1.0}};
}

json outlier_noise() {
  return json{{"depth_noise_rel", 0.005},
              {"outlier_fraction", 0.10},
              {"outlier_magnitude_rel", 0.30},
              {"overconfident", true},
              {"conf_model", {{"gain", 0.05}, {"offset", 0.005}}}};
}

std::string read_all(const fs::path& p) { return mvalign::read_file(p); }

bool directories_byte_identical(const fs::path& a, const fs::path& b) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel)) return false;
    if (read_all(entry.path()) != read_all(b / rel)) return false;
  }
  return true;
}

// The metric report carries the same keys on every scene.
void check_metric_schema(const json& metrics) {
  const std::vector<std::string> expected{"accuracy",
                                          "afe_percent",
                                          "ate",
                                          "avg_point_error",
                                          "completeness",
                                          "label_rejected_mean_error",
                                          "label_retained_fraction",
                                          "label_retained_mean_error",
                                          "spearman_rawconf_vs_neg_error",
                                          "spearman_weight_vs_neg_error"};
  std::vector<std::string> keys;
  for (const auto& item : metrics.items()) keys.push_back(item.key());
  CHECK(keys == expected);
}

}  // namespace

TEST_CASE("simulate writes a complete manifest and is deterministic") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());

  const std::string base = "simulate --config " + (tmp.path / "scene.json").string() +
                           " --noise " + (tmp.path / "noise.json").string() + " --seed 7 --out ";
  CHECK(run_cli(base + (tmp.path / "s1").string(), tmp.path).exit_code == 0);
  CHECK(run_cli(base + (tmp.path / "s2").string(), tmp.path).exit_code == 0);

  const json manifest = json::parse(read_all(tmp.path / "s1" / "manifest.json"));
  CHECK(manifest.at("num_views") == 3);
  CHECK(manifest.at("pairs").size() == 6);  // N(N-1)
  CHECK(manifest.contains("ground_truth"));
  CHECK(directories_byte_identical(tmp.path / "s1", tmp.path / "s2"));
}

TEST_CASE("simulate rejects invalid noise configuration with exit 2") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json{{"outlier_fraction", -0.5}});
  const RunResult result = run_cli("simulate --config " + (tmp.path / "scene.json").string() +
                                       " --noise " + (tmp.path / "noise.json").string() +
                                       " --seed 0 --out " + (tmp.path / "out").string(),
                                   tmp.path);
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("outlier_fraction") != std::string::npos);
}

TEST_CASE("align converges on a noiseless scene and plain mode keeps floored confidences") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 3 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  const std::string manifest = (tmp.path / "sim" / "manifest.json").string();

  SUBCASE("a noiseless scene is already solved and alignment does not degrade it") {
    REQUIRE(run_cli("align --manifest " + manifest + " --out " + (tmp.path / "aligned").string(),
                    tmp.path)
                .exit_code == 0);
    const json trace = json::parse(read_all(tmp.path / "aligned" / "objective_trace.json"));
    REQUIRE(trace.size() == 301);
    CHECK(fs::exists(tmp.path / "aligned" / "cloud.ply"));
    CHECK(fs::exists(tmp.path / "aligned" / "summary.json"));
    // The smoothed objective is bounded below by epsilon times the weight
    // mass, so the "final << initial" trace ratio only shows up when the
    // initialization is imperfect; on noiseless input the meaningful check is
    // that end-to-end recovery stays exact up to numerical noise.
    REQUIRE(run_cli("evaluate --manifest " + manifest + " --aligned " +
                        (tmp.path / "aligned").string() + " --out " +
                        (tmp.path / "metrics.json").string(),
                    tmp.path)
                .exit_code == 0);
    const json metrics = json::parse(read_all(tmp.path / "metrics.json"));
    CHECK(metrics.at("ate").get<double>() < 1e-3);
    CHECK(metrics.at("afe_percent").get<double>() < 0.1);
    CHECK(metrics.at("accuracy").get<double>() < 1e-3);
    CHECK(metrics.at("completeness").get<double>() < 1e-3);
  }
  SUBCASE("--no-robust emits exactly the floored raw confidences") {
    REQUIRE(run_cli("align --manifest " + manifest + " --no-robust --out " +
                        (tmp.path / "plain").string(),
                    tmp.path)
                .exit_code == 0);
    const mvalign::TensorData conf =
        mvalign::read_tensor(tmp.path / "sim" / "pairs" / "pair_000_001" / "conf_src");
    mvalign::TensorData weights =
        mvalign::read_tensor(tmp.path / "plain" / "weights" / "pair_000_001_src");
    REQUIRE(conf.f32.size() == weights.f32.size());
    for (std::size_t k = 0; k < conf.f32.size(); ++k) {
      const float expected = conf.f32[k] < 0.5f ? 0.0f : conf.f32[k];
      CHECK(weights.f32[k] == expected);
    }
  }
}

TEST_CASE("align reports a missing reverse pair with exit 3") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 5 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  // Drop the (1, 0) entry from the manifest.
  json manifest = json::parse(read_all(tmp.path / "sim" / "manifest.json"));
  json pairs = json::array();
  for (const json& p : manifest.at("pairs")) {
    if (p.at("src") == 1 && p.at("tgt") == 0) continue;
    pairs.push_back(p);
  }
  manifest["pairs"] = pairs;
  // Ground-truth pair maps must stay aligned with the prediction list.
  json gt_pairs = json::array();
  for (const json& p : manifest.at("ground_truth").at("pairs")) {
    if (p.at("src") == 1 && p.at("tgt") == 0) continue;
    gt_pairs.push_back(p);
  }
  manifest["ground_truth"]["pairs"] = gt_pairs;
  write_json(tmp.path / "sim" / "manifest.json", manifest);

  const RunResult result = run_cli("align --manifest " +
                                       (tmp.path / "sim" / "manifest.json").string() + " --out " +
                                       (tmp.path / "aligned").string(),
                                   tmp.path);
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("(1, 0)") != std::string::npos);
}

TEST_CASE("align maps optimizer divergence to exit 4") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", outlier_noise());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 31 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  CHECK(run_cli("align --manifest " + (tmp.path / "sim" / "manifest.json").string() +
                    " --lr 1e9 --steps 10 --out " + (tmp.path / "aligned").string(),
                tmp.path)
            .exit_code == 4);
}

TEST_CASE("pseudo-label cutoffs and validation") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 11 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  const std::string manifest = (tmp.path / "sim" / "manifest.json").string();
  REQUIRE(run_cli("align --manifest " + manifest + " --out " + (tmp.path / "aligned").string(),
                  tmp.path)
              .exit_code == 0);

  SUBCASE("a tiny positive cutoff retains everything on a clean scene") {
    REQUIRE(run_cli("pseudo-label --manifest " + manifest + " --aligned " +
                        (tmp.path / "aligned").string() + " --cutoff 1e-9 --out " +
                        (tmp.path / "labels").string(),
                    tmp.path)
                .exit_code == 0);
    const json summary = json::parse(read_all(tmp.path / "labels" / "summary.json"));
    CHECK(summary.at("fraction_retained").get<double>() == 1.0);
  }
  SUBCASE("a cutoff above the maximum weight retains nothing") {
    REQUIRE(run_cli("pseudo-label --manifest " + manifest + " --aligned " +
                        (tmp.path / "aligned").string() + " --cutoff 1e9 --out " +
                        (tmp.path / "labels").string(),
                    tmp.path)
                .exit_code == 0);
    const json summary = json::parse(read_all(tmp.path / "labels" / "summary.json"));
    CHECK(summary.at("fraction_retained").get<double>() == 0.0);
    CHECK(summary.at("retained").get<long>() == 0);
  }
  SUBCASE("non-positive cutoff exits 2") {
    CHECK(run_cli("pseudo-label --manifest " + manifest + " --aligned " +
                      (tmp.path / "aligned").string() + " --cutoff 0 --out " +
                      (tmp.path / "labels").string(),
                  tmp.path)
              .exit_code == 2);
  }
}

TEST_CASE("evaluate with injected ground truth reports zero errors") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 13 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  // Build an aligned directory straight from the ground truth.
  const json manifest = json::parse(read_all(tmp.path / "sim" / "manifest.json"));
  const fs::path sim = tmp.path / "sim";
  const fs::path aligned = tmp.path / "aligned";
  std::vector<double> focals;
  int v = 0;
  for (const json& pose_path : manifest.at("ground_truth").at("poses")) {
    const mvalign::TensorData pose = mvalign::read_tensor(sim / pose_path.get<std::string>());
    char tag[32];
    std::snprintf(tag, sizeof(tag), "pose_%03d", v++);
    mvalign::write_tensor(aligned / "poses" / tag, pose);
  }
  focals = manifest.at("ground_truth").at("focals").get<std::vector<double>>();
  mvalign::atomic_write_file(aligned / "focals.json", json(focals).dump() + "\n");
  // Depths: z components of each view's own ground-truth points.
  for (int view = 0; view < 3; ++view) {
    char pair_tag[48];
    std::snprintf(pair_tag, sizeof(pair_tag), "gt/pair_%03d_%03d/points_src", view,
                  view == 0 ? 1 : 0);
    const mvalign::PointMap pts =
        mvalign::point_map_from_tensor(mvalign::read_tensor(sim / pair_tag));
    mvalign::ScalarMap depth = mvalign::ScalarMap::constant(pts.width, pts.height, 0.0);
    for (int p = 0; p < pts.size(); ++p) depth.values[p] = pts.points(2, p);
    char tag[32];
    std::snprintf(tag, sizeof(tag), "depth_%03d", view);
    mvalign::write_tensor(aligned / "depths" / tag, mvalign::to_tensor(depth));
  }
  for (const json& p : manifest.at("pairs")) {
    char tag[48];
    std::snprintf(tag, sizeof(tag), "pair_%03d_%03d", p.at("src").get<int>(),
                  p.at("tgt").get<int>());
    const mvalign::TensorData conf_src =
        mvalign::read_tensor(sim / p.at("conf_src").get<std::string>());
    const mvalign::TensorData conf_tgt =
        mvalign::read_tensor(sim / p.at("conf_tgt").get<std::string>());
    mvalign::write_tensor(aligned / "weights" / (std::string(tag) + "_src"), conf_src);
    mvalign::write_tensor(aligned / "weights" / (std::string(tag) + "_tgt"), conf_tgt);
  }

  REQUIRE(run_cli("evaluate --manifest " + (sim / "manifest.json").string() + " --aligned " +
                      aligned.string() + " --out " + (tmp.path / "metrics.json").string(),
                  tmp.path)
              .exit_code == 0);
  const json metrics = json::parse(read_all(tmp.path / "metrics.json"));
  check_metric_schema(metrics);
  CHECK(metrics.at("ate").get<double>() < 1e-5);
  CHECK(metrics.at("afe_percent").get<double>() < 1e-8);
  CHECK(metrics.at("accuracy").get<double>() < 1e-5);
  CHECK(metrics.at("completeness").get<double>() < 1e-5);
  CHECK(metrics.at("avg_point_error").get<double>() < 1e-5);
  // Noiseless confidences are constant, so the rank correlations are null.
  CHECK(metrics.at("spearman_weight_vs_neg_error").is_null());
  CHECK(metrics.at("label_retained_mean_error").is_null());
}

TEST_CASE("evaluate without ground truth exits 5") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", json::object());
  REQUIRE(run_cli("simulate --config " + (tmp.path / "scene.json").string() + " --noise " +
                      (tmp.path / "noise.json").string() + " --seed 17 --out " +
                      (tmp.path / "sim").string(),
                  tmp.path)
              .exit_code == 0);
  json manifest = json::parse(read_all(tmp.path / "sim" / "manifest.json"));
  manifest.erase("ground_truth");
  write_json(tmp.path / "sim" / "manifest.json", manifest);
  REQUIRE(run_cli("align --manifest " + (tmp.path / "sim" / "manifest.json").string() +
                      " --out " + (tmp.path / "aligned").string(),
                  tmp.path)
              .exit_code == 0);
  CHECK(run_cli("evaluate --manifest " + (tmp.path / "sim" / "manifest.json").string() +
                    " --aligned " + (tmp.path / "aligned").string() + " --out " +
                    (tmp.path / "metrics.json").string(),
                tmp.path)
            .exit_code == 5);
}

TEST_CASE("pipeline runs end to end and --ab emits both metric files") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", outlier_noise());
  const std::string base = "pipeline --config " + (tmp.path / "scene.json").string() +
                           " --noise " + (tmp.path / "noise.json").string() + " --seed 23";
  SUBCASE("single run produces metrics with a sub-extent trajectory error") {
    REQUIRE(run_cli(base + " --out " + (tmp.path / "run").string(), tmp.path).exit_code == 0);
    const json metrics = json::parse(read_all(tmp.path / "run" / "metrics.json"));
    check_metric_schema(metrics);
    CHECK(metrics.at("ate").get<double>() < 0.05);
    CHECK(metrics.at("spearman_weight_vs_neg_error").get<double>() >
          metrics.at("spearman_rawconf_vs_neg_error").get<double>());
    CHECK(metrics.at("label_retained_fraction").get<double>() > 0.0);
  }
  SUBCASE("--ab emits robust and plain runs; robust wins on avg_point_error") {
    REQUIRE(run_cli(base + " --ab --out " + (tmp.path / "ab").string(), tmp.path).exit_code == 0);
    const json robust = json::parse(read_all(tmp.path / "ab" / "metrics_robust.json"));
    const json plain = json::parse(read_all(tmp.path / "ab" / "metrics_plain.json"));
    CHECK(robust.at("avg_point_error").get<double>() < plain.at("avg_point_error").get<double>());
  }
  SUBCASE("invalid scene config propagates exit 2 from the first stage") {
    write_json(tmp.path / "bad_scene.json", json{{"num_views", 1}});
    CHECK(run_cli("pipeline --config " + (tmp.path / "bad_scene.json").string() + " --out " +
                      (tmp.path / "bad").string(),
                  tmp.path)
              .exit_code == 2);
  }
}

TEST_CASE("pipeline reruns are byte-identical") {
  TempDir tmp;
  write_json(tmp.path / "scene.json", default_scene());
  write_json(tmp.path / "noise.json", outlier_noise());
  const std::string base = "pipeline --config " + (tmp.path / "scene.json").string() +
                           " --noise " + (tmp.path / "noise.json").string() + " --seed 29 --out ";
  REQUIRE(run_cli(base + (tmp.path / "r1").string(), tmp.path).exit_code == 0);
  REQUIRE(run_cli(base + (tmp.path / "r2").string(), tmp.path).exit_code == 0);
  CHECK(directories_byte_identical(tmp.path / "r1", tmp.path / "r2"));
}

TEST_CASE("align help advertises the published defaults") {
  TempDir tmp;
  const RunResult result = run_cli("align --help", tmp.path);
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("--mu") != std::string::npos);
  CHECK(result.output.find("0.01") != std::string::npos);   // mu and learning rate
  CHECK(result.output.find("300") != std::string::npos);    // steps
  CHECK(result.output.find("10") != std::string::npos);     // weight update cadence
  CHECK(result.output.find("0.5") != std::string::npos);    // confidence floor
  const RunResult label_help = run_cli("pseudo-label --help", tmp.path);
  CHECK(label_help.output.find("1.5") != std::string::npos);  // cutoff default
}
