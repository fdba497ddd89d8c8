#include "rvsm/data_io.hpp"

#include "scene_fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace rvsm;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("rvsm_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

bool clouds_equal(const LabeledPointCloud& a, const LabeledPointCloud& b) {
  if (a.size() != b.size() || a.labels != b.labels) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.points[i] != b.points[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("csv load parses a small two-class file") {
  TempDir dir;
  {
    std::ofstream out(dir.file("small.csv"));
    out << "x,y,z,label\n0,0,0,1\n1,0.5,-0.25,2\n0.1,0.2,0.3,1\n";
  }
  const LabeledPointCloud cloud = load_cloud(dir.file("small.csv"), CloudFormat::Csv);
  REQUIRE(cloud.size() == 3);
  CHECK(cloud.labels == std::vector<int>{1, 2, 1});
  CHECK(cloud.points[1] == Point3(1.0, 0.5, -0.25));
  CHECK(cloud.present_classes() == std::vector<int>{1, 2});
}

TEST_CASE("csv round trip is identity including awkward doubles") {
  TempDir dir;
  LabeledPointCloud cloud;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 200; ++i) {
    cloud.points.emplace_back(u(rng), u(rng) * 1e-7, u(rng) * 1e7);
    cloud.labels.push_back(i % 4);
    cloud.weights.push_back(1.0);
  }
  cloud.points.emplace_back(1.0 / 3.0, 0.1, -0.0);
  cloud.labels.push_back(0);
  cloud.weights.push_back(1.0);
  save_cloud(cloud, dir.file("rt.csv"), CloudFormat::Csv);
  CHECK(clouds_equal(load_cloud(dir.file("rt.csv"), CloudFormat::Csv), cloud));
}

TEST_CASE("csv errors carry line numbers") {
  TempDir dir;
  {
    std::ofstream out(dir.file("bad.csv"));
    out << "x,y,z,label\n";
    for (int i = 0; i < 5; ++i) out << "0,0,0,1\n";
    out << "0,nan,0,1\n";  // line 7
  }
  try {
    load_cloud(dir.file("bad.csv"), CloudFormat::Csv);
    FAIL("expected invalid_input");
  } catch (const invalid_input& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }

  {
    std::ofstream out(dir.file("head.csv"));
    out << "a,b,c\n";
  }
  CHECK_THROWS_AS(load_cloud(dir.file("head.csv"), CloudFormat::Csv), invalid_input);
}

TEST_CASE("empty cloud round trips as a valid file with header") {
  TempDir dir;
  save_cloud(LabeledPointCloud{}, dir.file("empty.csv"), CloudFormat::Csv);
  CHECK(load_cloud(dir.file("empty.csv"), CloudFormat::Csv).size() == 0);
  save_cloud(LabeledPointCloud{}, dir.file("empty.ply"), CloudFormat::Ply);
  CHECK(load_cloud(dir.file("empty.ply"), CloudFormat::Ply).size() == 0);
}

TEST_CASE("binary ply round trip is identity") {
  TempDir dir;
  LabeledPointCloud cloud;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 500; ++i) {
    cloud.points.emplace_back(u(rng), u(rng), u(rng));
    cloud.labels.push_back(i % 3 - 1);
    cloud.weights.push_back(1.0);
  }
  save_cloud(cloud, dir.file("rt.ply"), CloudFormat::Ply);
  CHECK(clouds_equal(load_cloud(dir.file("rt.ply"), CloudFormat::Ply), cloud));
}

TEST_CASE("ascii ply with float coordinates is accepted") {
  TempDir dir;
  {
    std::ofstream out(dir.file("ascii.ply"));
    out << "ply\nformat ascii 1.0\nelement vertex 2\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "property int label\nend_header\n"
        << "0 0 0 1\n1.5 -2 0.25 2\n";
  }
  const LabeledPointCloud cloud = load_cloud(dir.file("ascii.ply"), CloudFormat::Ply);
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[1] == Point3(1.5, -2.0, 0.25));
  CHECK(cloud.labels[1] == 2);
}

TEST_CASE("ply without a label property is rejected") {
  TempDir dir;
  {
    std::ofstream out(dir.file("nolabel.ply"));
    out << "ply\nformat ascii 1.0\nelement vertex 1\n"
        << "property float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
  }
  CHECK_THROWS_AS(load_cloud(dir.file("nolabel.ply"), CloudFormat::Ply), invalid_input);
}

TEST_CASE("deterministic byte output for fixed input") {
  TempDir dir;
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(40, 3));
  for (auto fmt : {CloudFormat::Csv, CloudFormat::Ply}) {
    const char* ext = fmt == CloudFormat::Csv ? "a.csv" : "a.ply";
    const char* ext2 = fmt == CloudFormat::Csv ? "b.csv" : "b.ply";
    save_cloud(scene.train, dir.file(ext), fmt);
    save_cloud(scene.train, dir.file(ext2), fmt);
    std::ifstream a(dir.file(ext), std::ios::binary), b(dir.file(ext2), std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}

TEST_CASE("generate_scene with zero noise keeps labels clean") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(50, 11));
  CHECK(scene.train.labels == scene.truth.labels);
  for (std::size_t i = 0; i < scene.train.size(); ++i)
    CHECK(scene.train.points[i] == scene.truth.points[i]);
  // blob membership is exact
  for (std::size_t i = 0; i < scene.truth.size(); ++i) {
    const Point3 center = scene.truth.labels[i] == 0 ? Point3(0, 0, 0) : Point3(2, 0, 0);
    CHECK((scene.truth.points[i] - center).norm() <= 0.4 + 1e-12);
  }
}

TEST_CASE("generate_scene empirical flip rate matches the requested noise") {
  SyntheticSceneSpec spec;
  spec.class_blobs = {{0, Point3(0, 0, 0), 1.0, 5000}, {1, Point3(5, 0, 0), 1.0, 5000}};
  spec.label_noise_rate = 0.2;
  spec.rng_seed = 99;
  const SceneData scene = generate_scene(spec);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < scene.train.size(); ++i)
    if (scene.train.labels[i] != scene.truth.labels[i]) ++flipped;
  const double rate = static_cast<double>(flipped) / static_cast<double>(scene.train.size());
  CHECK(rate > 0.18);
  CHECK(rate < 0.22);
  // held-out labels stay clean
  for (std::size_t i = 0; i < scene.test.size(); ++i)
    CHECK((scene.test.labels[i] == 0 || scene.test.labels[i] == 1));
}

TEST_CASE("generate_scene is deterministic under its seed") {
  const SceneData a = generate_scene(fixtures::three_class_spec(50, 0.1, 5));
  const SceneData b = generate_scene(fixtures::three_class_spec(50, 0.1, 5));
  CHECK(clouds_equal(a.train, b.train));
  CHECK(clouds_equal(a.test, b.test));
  CHECK(clouds_equal(a.truth, b.truth));
  const SceneData c = generate_scene(fixtures::three_class_spec(50, 0.1, 6));
  CHECK_FALSE(clouds_equal(a.train, c.train));
}

TEST_CASE("scene spec validation") {
  SyntheticSceneSpec spec;
  CHECK_THROWS_AS(spec.validate(), invalid_input);  // no blobs
  spec.class_blobs = {{0, Point3(0, 0, 0), 1.0, 10}};
  spec.label_noise_rate = 0.6;
  CHECK_THROWS_AS(spec.validate(), invalid_input);
}
