#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "mvalign/manifest.hpp"
#include "mvalign/pipeline.hpp"
#include "mvalign/simulator.hpp"
#include "mvalign/tensor_io.hpp"

using namespace mvalign;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mvalign_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("tensor containers round-trip bytes exactly") {
  TempDir tmp;
  auto rng = testing::make_rng(501);
  SUBCASE("f32") {
    TensorData t;
    t.dtype = Dtype::f32;
    t.shape = {5, 7, 3};
    std::uniform_real_distribution<float> dist(-10.0f, 10.0f);
    for (std::size_t k = 0; k < 105; ++k) t.f32.push_back(dist(rng));
    write_tensor(tmp.path / "a", t);
    const TensorData back = read_tensor(tmp.path / "a");
    CHECK(back.dtype == Dtype::f32);
    CHECK(back.shape == t.shape);
    CHECK(back.f32 == t.f32);
    // Re-writing reproduces the files byte for byte.
    const std::string json_bytes = slurp(tmp.path / "a.json");
    const std::string bin_bytes = slurp(tmp.path / "a.bin");
    write_tensor(tmp.path / "a", back);
    CHECK(slurp(tmp.path / "a.json") == json_bytes);
    CHECK(slurp(tmp.path / "a.bin") == bin_bytes);
  }
  SUBCASE("u8") {
    TensorData t;
    t.dtype = Dtype::u8;
    t.shape = {4, 6};
    for (std::size_t k = 0; k < 24; ++k) t.u8.push_back(static_cast<std::uint8_t>(k * 11));
    write_tensor(tmp.path / "m", t);
    const TensorData back = read_tensor(tmp.path / "m");
    CHECK(back.u8 == t.u8);
  }
}

TEST_CASE("tensor validation failures raise IoError") {
  TempDir tmp;
  TensorData t;
  t.dtype = Dtype::f32;
  t.shape = {2, 2};
  t.f32 = {1.0f, 2.0f, 3.0f, 4.0f};
  write_tensor(tmp.path / "t", t);
  SUBCASE("payload length mismatch") {
    std::ofstream out(tmp.path / "t.bin", std::ios::binary | std::ios::trunc);
    out << "abc";
    out.close();
    CHECK_THROWS_AS(read_tensor(tmp.path / "t"), IoError);
  }
  SUBCASE("unsupported dtype in the header") {
    atomic_write_file(tmp.path / "t.json",
                      R"({"dtype":"f64","shape":[2,2],"order":"row-major","endianness":"little"})");
    CHECK_THROWS_AS(read_tensor(tmp.path / "t"), IoError);
  }
  SUBCASE("missing payload") {
    fs::remove(tmp.path / "t.bin");
    CHECK_THROWS_AS(read_tensor(tmp.path / "t"), IoError);
  }
  SUBCASE("shape/storage mismatch on write") {
    t.shape = {3, 3};
    CHECK_THROWS_AS(write_tensor(tmp.path / "bad", t), IoError);
  }
}

TEST_CASE("map and pose tensor conversions invert each other") {
  auto rng = testing::make_rng(502);
  SUBCASE("point map") {
    const PointMap m = testing::random_points(rng, 6, 4);
    const PointMap back = point_map_from_tensor(to_tensor(m));
    CHECK(back.width == 6);
    CHECK(back.height == 4);
    CHECK((back.points.cast<float>() - m.points.cast<float>()).norm() == 0.0f);
  }
  SUBCASE("pose") {
    const PoseSE3 pose = testing::random_pose(rng);
    const PoseSE3 back = pose_from_tensor(to_tensor(pose));
    CHECK((back.matrix().cast<float>() - pose.matrix().cast<float>()).norm() == 0.0f);
  }
  SUBCASE("mask") {
    MaskMap mask = MaskMap::constant(5, 3, false);
    mask.values[4] = 1;
    mask.values[9] = 1;
    const MaskMap back = mask_map_from_tensor(to_tensor(mask));
    CHECK(back.values == mask.values);
  }
}

TEST_CASE("scene save/load round-trips at file level") {
  TempDir tmp;
  SceneConfig cfg;
  cfg.num_views = 3;
  cfg.width = 12;
  cfg.height = 9;
  cfg.focal_min = 8.0;
  cfg.focal_max = 12.0;
  cfg.seed = 503;
  NoiseModel noise;
  noise.depth_noise_rel = 0.01;
  run_simulate(cfg, noise, 503, tmp.path / "sim");

  const SceneData loaded = load_scene(tmp.path / "sim" / "manifest.json");
  CHECK(loaded.num_views == 3);
  CHECK(loaded.predictions.size() == 6);
  REQUIRE(loaded.ground_truth.has_value());
  CHECK(loaded.ground_truth->poses.size() == 3);
  CHECK(loaded.ground_truth->focals.size() == 3);
  CHECK(loaded.ground_truth->scene_extent == doctest::Approx(1.0));

  // Saving the loaded scene again reproduces every file byte for byte.
  SceneData copy = loaded;
  save_scene(tmp.path / "sim2", copy);
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path / "sim")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), tmp.path / "sim");
    CHECK(slurp(tmp.path / "sim2" / rel) == slurp(entry.path()));
  }
}

TEST_CASE("no temporary files are left behind") {
  TempDir tmp;
  TensorData t;
  t.dtype = Dtype::u8;
  t.shape = {2};
  t.u8 = {1, 2};
  write_tensor(tmp.path / "x", t);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(tmp.path)) {
    CHECK(entry.path().extension() != ".tmp");
    ++files;
  }
  CHECK(files == 2);
}

TEST_CASE("config json parsing applies defaults and validates") {
  const SceneConfig cfg = scene_config_from_json(nlohmann::json::parse(
      R"({"num_views": 4, "width": 16, "height": 12, "focal_range": [10, 20]})"));
  CHECK(cfg.num_views == 4);
  CHECK(cfg.focal_min == 10.0);
  CHECK(cfg.focal_max == 20.0);
  CHECK(cfg.scene_extent == 1.0);

  CHECK_THROWS_AS(
      scene_config_from_json(nlohmann::json::parse(R"({"num_views": 1})")),
      InvalidInputError);
  CHECK_THROWS_AS(
      noise_model_from_json(nlohmann::json::parse(R"({"outlier_fraction": -0.2})")),
      InvalidInputError);
  const NoiseModel noise = noise_model_from_json(nlohmann::json::parse(
      R"({"depth_noise_rel": 0.01, "conf_model": {"gain": 0.05}})"));
  CHECK(noise.depth_noise_rel == 0.01);
  CHECK(noise.conf_model.gain == 0.05);
  CHECK(noise.conf_model.offset == 0.1);
}
