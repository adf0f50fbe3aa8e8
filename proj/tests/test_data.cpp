#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "neaw/data.hpp"
#include "neaw/errors.hpp"
#include "neaw/io_util.hpp"

using namespace neaw;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / (std::string("neaw_data_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("sphere surface samples sit on the unit sphere, area-uniform by octant") {
  SeededRng rng(101);
  const int n = 10000;
  const Mat64 pts = sample_shape_surface(ShapeKind::Sphere, n, rng);
  int octant[8] = {0};
  for (int i = 0; i < n; ++i) {
    const double* p = pts.row(i);
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    REQUIRE(std::abs(r - 1.0) < 1e-9);
    octant[(p[0] > 0) * 4 + (p[1] > 0) * 2 + (p[2] > 0)]++;
  }
  // Multinomial 5 sigma, p = 1/8.
  const double sigma = std::sqrt(n * 0.125 * 0.875);
  for (int o = 0; o < 8; ++o) CHECK(std::abs(octant[o] - n * 0.125) < 5.0 * sigma);
}

TEST_CASE("cube surface samples lie on a face") {
  SeededRng rng(102);
  const Mat64 pts = sample_shape_surface(ShapeKind::Cube, 2000, rng);
  for (int i = 0; i < pts.rows; ++i) {
    const double* p = pts.row(i);
    const double m = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2])});
    REQUIRE(std::abs(m - 1.0) < 1e-9);
  }
}

TEST_CASE("cylinder, cone and torus samples satisfy their surface equations") {
  SeededRng rng(103);
  const Mat64 cyl = sample_shape_surface(ShapeKind::Cylinder, 2000, rng);
  for (int i = 0; i < cyl.rows; ++i) {
    const double* p = cyl.row(i);
    const double rho = std::sqrt(p[0] * p[0] + p[1] * p[1]);
    const bool side = std::abs(rho - 0.6) < 1e-9 && std::abs(p[2]) <= 1.0 + 1e-9;
    const bool cap = std::abs(std::abs(p[2]) - 1.0) < 1e-9 && rho <= 0.6 + 1e-9;
    REQUIRE((side || cap));
  }
  const Mat64 cone = sample_shape_surface(ShapeKind::Cone, 2000, rng);
  for (int i = 0; i < cone.rows; ++i) {
    const double* p = cone.row(i);
    const double rho = std::sqrt(p[0] * p[0] + p[1] * p[1]);
    const bool lateral = std::abs(rho - 0.8 * (1.0 - p[2]) / 2.0) < 1e-9 &&
                         p[2] >= -1.0 - 1e-9 && p[2] <= 1.0 + 1e-9;
    const bool base = std::abs(p[2] + 1.0) < 1e-9 && rho <= 0.8 + 1e-9;
    REQUIRE((lateral || base));
  }
  const Mat64 torus = sample_shape_surface(ShapeKind::Torus, 2000, rng);
  for (int i = 0; i < torus.rows; ++i) {
    const double* p = torus.row(i);
    const double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - 0.75;
    REQUIRE(std::abs(std::sqrt(ring * ring + p[2] * p[2]) - 0.3) < 1e-9);
  }
}

TEST_CASE("generate_shape output is normalized and seed-deterministic") {
  const PointCloud a = generate_shape(ShapeKind::Torus, 500, 7, 0.02);
  const PointCloud b = generate_shape(ShapeKind::Torus, 500, 7, 0.02);
  CHECK(a.points.data == b.points.data);
  const PointCloud c = generate_shape(ShapeKind::Torus, 500, 8, 0.02);
  CHECK(a.points.data != c.points.data);

  Vec64 centroid(3, 0.0);
  double maxn = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      centroid[k] += a.points.at(i, k);
      s += a.points.at(i, k) * a.points.at(i, k);
    }
    maxn = std::max(maxn, std::sqrt(s));
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(centroid[k] / a.size()) < 1e-9);
  CHECK(maxn <= 1.0 + 1e-9);
  CHECK(std::abs(maxn - 1.0) < 1e-9);
  CHECK_THROWS_AS(generate_shape(ShapeKind::Cube, 10, 1, -0.1), std::invalid_argument);
}

TEST_CASE("normalize commutes with scaling and translation") {
  SeededRng rng(104);
  PointCloud cloud;
  cloud.points = Mat64(40, 3);
  for (auto& v : cloud.points.data) v = rng.next_gaussian();
  PointCloud scaled = cloud, shifted = cloud;
  for (auto& v : scaled.points.data) v *= 7.0;
  for (int i = 0; i < shifted.size(); ++i) {
    shifted.points.at(i, 0) += 3.0;
    shifted.points.at(i, 1) -= 11.0;
  }
  const PointCloud base = normalize(cloud);
  const PointCloud ns = normalize(scaled);
  const PointCloud nt = normalize(shifted);
  for (size_t i = 0; i < base.points.data.size(); ++i) {
    CHECK(std::abs(base.points.data[i] - ns.points.data[i]) < 1e-9);
    CHECK(std::abs(base.points.data[i] - nt.points.data[i]) < 1e-9);
  }
}

TEST_CASE("normalize of a degenerate cloud centers without scaling") {
  PointCloud cloud;
  cloud.points = Mat64(3, 3, 5.0);
  const PointCloud out = normalize(std::move(cloud));
  for (double v : out.points.data) CHECK(v == 0.0);
}

TEST_CASE("parse_off handles the fused ModelNet header") {
  // Unit cube, 6 quad faces; header fused as in ModelNet exports.
  const std::string text =
      "OFF8 6 12\n"
      "0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n"
      "4 0 1 2 3\n4 4 5 6 7\n4 0 1 5 4\n4 2 3 7 6\n4 1 2 6 5\n4 0 3 7 4\n";
  const TriMesh mesh = parse_off(text);
  CHECK(mesh.vertices.size() == 8);
  CHECK(mesh.faces.size() == 12);  // quads fan into two triangles each

  const std::string separated = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
  const TriMesh tri = parse_off(separated);
  CHECK(tri.vertices.size() == 3);
  CHECK(tri.faces.size() == 1);

  const std::string comments = "# header\nOFF # fmt\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
  CHECK(parse_off(comments).faces.size() == 1);
}

TEST_CASE("parse_off rejects malformed inputs with line numbers") {
  CHECK_THROWS_WITH_AS(parse_off("OFF\n0 0 0\n"),
                       doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse_off("OFF\n0 0 0\n"),
                       doctest::Contains("empty mesh"), ParseError);
  CHECK_THROWS_WITH_AS(parse_off("PLY\n3 1 0\n"), doctest::Contains("OFF header"), ParseError);
  CHECK_THROWS_WITH_AS(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n"),
                       doctest::Contains("line 6"), ParseError);
  CHECK_THROWS_WITH_AS(parse_off("OFF\n3 1 0\n0 0 zebra\n1 0 0\n0 1 0\n3 0 1 2\n"),
                       doctest::Contains("line 3"), ParseError);
  CHECK_THROWS_AS(parse_off(""), ParseError);
}

TEST_CASE("parse_off drops degenerate triangles") {
  const std::string text = "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n3 0 0 1\n";
  const TriMesh mesh = parse_off(text);
  CHECK(mesh.faces.size() == 1);
}

TEST_CASE("serialize_off round-trips through parse_off") {
  TriMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1.25, 0, 0}, {0, 3.5e-3, 0}, {0.1, 0.2, 0.3}};
  mesh.faces = {{0, 1, 2}, {1, 2, 3}};
  const TriMesh back = parse_off(serialize_off(mesh));
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.faces == mesh.faces);
  for (size_t i = 0; i < mesh.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) CHECK(back.vertices[i][size_t(k)] == mesh.vertices[i][size_t(k)]);
}

TEST_CASE("sample_surface weights triangles by area") {
  // Two disjoint triangles with area ratio 1:3 in the z=0 plane.
  TriMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 0, 0}, {13, 0, 0}, {10, 2, 0}};
  mesh.faces = {{0, 1, 2}, {3, 4, 5}};
  const int n = 10000;
  const PointCloud cloud = sample_surface(mesh, n, 31);
  REQUIRE(cloud.size() == n);
  // After normalization the two blobs are separated by sign of x.
  int big = 0;
  for (int i = 0; i < n; ++i)
    if (cloud.points.at(i, 0) > 0) big++;
  const double p = 3.0 / 3.5;  // 3 / (0.5 + 3)
  const double sigma = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(big - n * p) < 5.0 * sigma);
}

TEST_CASE("sample_surface never draws from zero-area triangles") {
  TriMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}, {6, 6, 6}, {7, 7, 7}};
  mesh.faces = {{3, 4, 5}, {0, 1, 2}};  // first face is collinear (zero area)
  const PointCloud cloud = sample_surface(mesh, 500, 9);
  // All samples must come from the valid triangle; in normalized coordinates
  // the degenerate triangle's corner (5,5,5)... would be an extreme outlier.
  for (int i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    const double far = std::abs(p[0] - p[1]) + std::abs(p[1] - p[2]);
    CHECK(far > 1e-12);  // points on x=y=z line would have far == 0
  }

  TriMesh degen;
  degen.vertices = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  degen.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(sample_surface(degen, 10, 1), std::invalid_argument);
}

TEST_CASE("mnist_to_points maps pixels to [-1,1]^2") {
  std::array<uint8_t, 784> img{};
  img[14 * 28 + 14] = 200;
  const PointCloud cloud = mnist_to_points(img, 256, 1);
  REQUIRE(cloud.size() == 1);
  REQUIRE(cloud.dim() == 2);
  CHECK(std::abs(cloud.points.at(0, 0) - 0.5 / 13.5) < 1e-12);
  CHECK(std::abs(cloud.points.at(0, 1) - 0.5 / 13.5) < 1e-12);

  img[14 * 28 + 14] = 127;  // exactly at threshold: not included
  CHECK_THROWS_AS(mnist_to_points(img, 256, 1), std::invalid_argument);

  std::array<uint8_t, 784> zero{};
  CHECK_THROWS_AS(mnist_to_points(zero, 256, 1), std::invalid_argument);
}

TEST_CASE("mnist_to_points subsamples deterministically") {
  std::array<uint8_t, 784> img{};
  for (size_t i = 0; i < 784; ++i) img[i] = 255;
  const PointCloud a = mnist_to_points(img, 100, 5);
  const PointCloud b = mnist_to_points(img, 100, 5);
  const PointCloud c = mnist_to_points(img, 100, 6);
  REQUIRE(a.size() == 100);
  CHECK(a.points.data == b.points.data);
  CHECK(a.points.data != c.points.data);
  // Subsample is a subset of the full mapping grid.
  for (int i = 0; i < a.size(); ++i) {
    const double col = a.points.at(i, 0) * 13.5 + 13.5;
    CHECK(std::abs(col - std::round(col)) < 1e-9);
  }
}

TEST_CASE("render_digit produces plausible ink mass for every digit") {
  for (int d = 0; d < 10; ++d) {
    for (uint64_t seed = 0; seed < 8; ++seed) {
      SeededRng rng(derive_seed(seed, "digit"));
      const auto img = render_digit(d, rng);
      int ink = 0;
      for (uint8_t v : img) ink += v > 127;
      CHECK(ink >= 40);
      CHECK(ink <= 400);
    }
  }
  SeededRng r1(42), r2(42);
  CHECK(render_digit(3, r1) == render_digit(3, r2));
  SeededRng r3(43);
  CHECK(render_digit(3, r3) != render_digit(3, r2));
  SeededRng r4(1);
  CHECK_THROWS_AS(render_digit(10, r4), std::invalid_argument);
}

TEST_CASE("idx containers round-trip and reject bad bytes") {
  SeededRng rng(77);
  std::vector<std::array<uint8_t, 784>> images(3);
  std::vector<uint8_t> labels = {3, 1, 4};
  for (auto& img : images)
    for (auto& v : img) v = uint8_t(rng.next_below(256));
  const std::string ib = encode_idx_images(images);
  const std::string lb = encode_idx_labels(labels);
  const auto images2 =
      parse_idx_images({reinterpret_cast<const uint8_t*>(ib.data()), ib.size()});
  const auto labels2 =
      parse_idx_labels({reinterpret_cast<const uint8_t*>(lb.data()), lb.size()});
  CHECK(images2 == images);
  CHECK(labels2 == labels);

  std::string bad = ib;
  bad[3] = 0x01;  // wrong magic
  CHECK_THROWS_AS(parse_idx_images({reinterpret_cast<const uint8_t*>(bad.data()), bad.size()}),
                  ParseError);
  std::string trunc = ib.substr(0, ib.size() - 1);
  CHECK_THROWS_AS(
      parse_idx_images({reinterpret_cast<const uint8_t*>(trunc.data()), trunc.size()}),
      ParseError);
  CHECK_THROWS_AS(parse_idx_labels({reinterpret_cast<const uint8_t*>(ib.data()), ib.size()}),
                  ParseError);
}

TEST_CASE("stratified_subset keeps ceil(fraction * count) per class") {
  DatasetSplit split;
  split.class_names = {"a", "b"};
  for (int cls = 0; cls < 2; ++cls)
    for (int i = 0; i < 10; ++i) {
      PointCloud c;
      c.points = Mat64(1, 2, double(cls * 100 + i));
      c.label = cls;
      c.source_id = std::to_string(cls * 100 + i);
      split.clouds.push_back(std::move(c));
    }
  const DatasetSplit sub = stratified_subset(split, 0.25, 11);
  CHECK(sub.clouds.size() == 6);  // ceil(2.5) = 3 per class
  CHECK(sub.fraction == 0.25);
  int per_class[2] = {0, 0};
  for (const auto& c : sub.clouds) per_class[*c.label]++;
  CHECK(per_class[0] == 3);
  CHECK(per_class[1] == 3);

  const DatasetSplit sub2 = stratified_subset(split, 0.25, 11);
  const DatasetSplit sub3 = stratified_subset(split, 0.25, 12);
  auto ids = [](const DatasetSplit& s) {
    std::vector<std::string> v;
    for (const auto& c : s.clouds) v.push_back(c.source_id);
    return v;
  };
  CHECK(ids(sub) == ids(sub2));
  CHECK(ids(sub) != ids(sub3));
  CHECK(stratified_subset(split, 1.0, 1).clouds.size() == 20);
  CHECK_THROWS_AS(stratified_subset(split, 0.0, 1), std::invalid_argument);
}

TEST_CASE("make_shape_dataset is balanced, labeled and reproducible per cloud") {
  const DatasetSplit ds = make_shape_dataset(2, 64, 0.01, 99, "train");
  REQUIRE(ds.clouds.size() == 10);
  REQUIRE(ds.class_names.size() == 5);
  int counts[5] = {0};
  for (const auto& c : ds.clouds) counts[*c.label]++;
  for (int k = 0; k < 5; ++k) CHECK(counts[k] == 2);

  const DatasetSplit again = make_shape_dataset(2, 64, 0.01, 99, "train");
  for (size_t i = 0; i < ds.clouds.size(); ++i)
    CHECK(ds.clouds[i].points.data == again.clouds[i].points.data);
  // Different tag -> different per-cloud seeds.
  const DatasetSplit other = make_shape_dataset(2, 64, 0.01, 99, "test");
  CHECK(ds.clouds[0].points.data != other.clouds[0].points.data);
}

TEST_CASE("make_digit_dataset yields balanced capped clouds") {
  const DatasetSplit ds = make_digit_dataset(3, 64, 5, "train");
  REQUIRE(ds.clouds.size() == 30);
  REQUIRE(ds.class_names.size() == 10);
  for (const auto& c : ds.clouds) {
    CHECK(c.size() <= 64);
    CHECK(c.dim() == 2);
  }
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
  const fs::path dir = temp_dir("roundtrip");
  const DatasetSplit train = make_shape_dataset(2, 32, 0.02, 5, "train");
  const DatasetSplit test = make_shape_dataset(1, 32, 0.02, 5, "test");
  save_dataset(dir, train, test);

  const DatasetSplit train2 = load_dataset(dir, "train");
  const DatasetSplit test2 = load_dataset(dir, "test");
  REQUIRE(train2.clouds.size() == train.clouds.size());
  REQUIRE(test2.clouds.size() == test.clouds.size());
  CHECK(train2.class_names == train.class_names);
  for (size_t i = 0; i < train.clouds.size(); ++i) {
    CHECK(train2.clouds[i].points.data == train.clouds[i].points.data);
    CHECK(*train2.clouds[i].label == *train.clouds[i].label);
  }
  fs::remove_all(dir);
}

TEST_CASE("load_cloud_csv rejects malformed files") {
  const fs::path dir = temp_dir("badcsv");
  write_file_atomic(dir / "bad1.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(load_cloud_csv(dir / "bad1.csv"), ParseError);
  write_file_atomic(dir / "bad2.csv", "x,y\n1,2,3\n");
  CHECK_THROWS_AS(load_cloud_csv(dir / "bad2.csv"), ParseError);
  write_file_atomic(dir / "bad3.csv", "x,y\n1,zebra\n");
  CHECK_THROWS_AS(load_cloud_csv(dir / "bad3.csv"), ParseError);
  write_file_atomic(dir / "bad4.csv", "x,y\n");
  CHECK_THROWS_AS(load_cloud_csv(dir / "bad4.csv"), ParseError);
  CHECK_THROWS_AS(load_cloud_csv(dir / "missing.csv"), IoError);
  fs::remove_all(dir);
}
