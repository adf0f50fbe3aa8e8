#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neaw/numerics.hpp"

namespace neaw {

// One object as an unordered point set. points is N x D (D = 2 or 3).
struct PointCloud {
  Mat64 points;
  std::optional<int> label;
  std::string source_id;

  int size() const { return points.rows; }
  int dim() const { return points.cols; }
  std::span<const double> point(int i) const { return {points.row(i), size_t(points.cols)}; }
};

struct TriMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> faces;
};

struct DatasetSplit {
  std::vector<PointCloud> clouds;
  std::vector<std::string> class_names;
  double fraction = 1.0;

  int num_classes() const { return int(class_names.size()); }
};

enum class ShapeKind { Sphere, Cube, Cylinder, Cone, Torus };

ShapeKind shape_from_name(std::string_view name);
std::string_view shape_name(ShapeKind kind);
const std::vector<std::string>& shape_class_names();

// Area-uniform samples on the canonical shape surface, no jitter, no
// normalization. Exposed separately so the surface distribution itself can
// be validated.
Mat64 sample_shape_surface(ShapeKind kind, int n, SeededRng& rng);

// sample_shape_surface + per-coordinate Gaussian jitter + normalize().
PointCloud generate_shape(ShapeKind kind, int n, uint64_t seed, double jitter);

// Centroid moved to the origin, then scaled by 1/max-norm (scale skipped when
// all points coincide with the centroid).
PointCloud normalize(PointCloud cloud);

// OFF mesh text. Accepts the ModelNet variant where the counts are fused
// onto the header line ("OFF8 6 12"). Faces with more than 3 vertices are
// fan-triangulated from the first vertex; degenerate triangles are dropped.
// Throws ParseError with a 1-based line number.
TriMesh parse_off(std::string_view text);
std::string serialize_off(const TriMesh& mesh);

// Area-weighted triangle choice, uniform barycentric point per draw, then
// normalize(). Throws std::invalid_argument when the mesh has zero total area.
PointCloud sample_surface(const TriMesh& mesh, int n, uint64_t seed);

// 28x28 grayscale image -> 2-D cloud of pixels with intensity > 127, mapped
// by (col - 13.5) / 13.5 and (row - 13.5) / 13.5. Clouds larger than
// max_points are subsampled without replacement using the seed.
PointCloud mnist_to_points(std::span<const uint8_t> image, int max_points, uint64_t seed);

// Procedurally rendered digit raster in the MNIST frame: per-sample affine
// perturbation, stroke-width jitter, light noise. Stands in for handwritten
// digits when no IDX files are available.
std::array<uint8_t, 784> render_digit(int digit, SeededRng& rng);

// IDX (big-endian) image/label containers.
std::vector<std::array<uint8_t, 784>> parse_idx_images(std::span<const uint8_t> bytes);
std::vector<uint8_t> parse_idx_labels(std::span<const uint8_t> bytes);
std::string encode_idx_images(const std::vector<std::array<uint8_t, 784>>& images);
std::string encode_idx_labels(const std::vector<uint8_t>& labels);

// Keeps ceil(fraction * count) clouds per class, selected by a per-class
// derived seed; original order preserved.
DatasetSplit stratified_subset(const DatasetSplit& split, double fraction, uint64_t seed);

// Balanced five-shape suite; per-cloud seed derived from master + source id.
DatasetSplit make_shape_dataset(int per_class, int points_per_cloud, double jitter,
                                uint64_t seed, std::string_view tag);

// Balanced synthetic-digit suite (render_digit -> mnist_to_points).
DatasetSplit make_digit_dataset(int per_class, int max_points, uint64_t seed,
                                std::string_view tag);

// Digit clouds from IDX files, stratified to per_class samples per digit.
DatasetSplit make_digit_dataset_from_idx(const std::filesystem::path& images_path,
                                         const std::filesystem::path& labels_path,
                                         int per_class, int max_points, uint64_t seed,
                                         std::string_view tag);

// On-disk layout: one CSV per cloud (header x,y[,z], %.17g) under <dir>/<split>/,
// indexed by <dir>/manifest.jsonl lines {"path","label","class","split"}.
void save_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path);
Mat64 load_cloud_csv(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& dir, const DatasetSplit& train,
                  const DatasetSplit& test);
DatasetSplit load_dataset(const std::filesystem::path& dir, std::string_view split);

}  // namespace neaw
