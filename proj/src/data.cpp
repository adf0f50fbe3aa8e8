#include "neaw/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "neaw/errors.hpp"
#include "neaw/io_util.hpp"

namespace neaw {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Canonical shape dimensions (pre-normalization).
constexpr double kCubeHalf = 1.0;
constexpr double kCylRadius = 0.6;
constexpr double kCylHalfHeight = 1.0;
constexpr double kConeRadius = 0.8;   // base at z = -1, apex at z = +1
constexpr double kTorusMajor = 0.75;
constexpr double kTorusMinor = 0.3;

}  // namespace

ShapeKind shape_from_name(std::string_view name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "cube") return ShapeKind::Cube;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "cone") return ShapeKind::Cone;
  if (name == "torus") return ShapeKind::Torus;
  throw std::invalid_argument("unknown shape: " + std::string(name));
}

std::string_view shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Torus: return "torus";
  }
  throw std::invalid_argument("unknown shape kind");
}

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names = {"sphere", "cube", "cylinder", "cone", "torus"};
  return names;
}

Mat64 sample_shape_surface(ShapeKind kind, int n, SeededRng& rng) {
  if (n < 1) throw std::invalid_argument("sample_shape_surface: n must be >= 1");
  Mat64 pts(n, 3);
  for (int i = 0; i < n; ++i) {
    double* p = pts.row(i);
    switch (kind) {
      case ShapeKind::Sphere: {
        // z uniform in [-1,1] and free angle is area-uniform on the sphere.
        const double z = 2.0 * rng.next_double() - 1.0;
        const double phi = kTwoPi * rng.next_double();
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        p[0] = r * std::cos(phi);
        p[1] = r * std::sin(phi);
        p[2] = z;
        break;
      }
      case ShapeKind::Cube: {
        const int face = int(rng.next_below(6));
        const double a = kCubeHalf * (2.0 * rng.next_double() - 1.0);
        const double b = kCubeHalf * (2.0 * rng.next_double() - 1.0);
        const double s = (face & 1) ? -kCubeHalf : kCubeHalf;
        if (face < 2) { p[0] = s; p[1] = a; p[2] = b; }
        else if (face < 4) { p[0] = a; p[1] = s; p[2] = b; }
        else { p[0] = a; p[1] = b; p[2] = s; }
        break;
      }
      case ShapeKind::Cylinder: {
        const double lateral = kTwoPi * kCylRadius * 2.0 * kCylHalfHeight;
        const double cap = kPi * kCylRadius * kCylRadius;
        const double sel = rng.next_double() * (lateral + 2.0 * cap);
        const double a = rng.next_double();
        const double b = rng.next_double();
        const double phi = kTwoPi * a;
        if (sel < lateral) {
          p[0] = kCylRadius * std::cos(phi);
          p[1] = kCylRadius * std::sin(phi);
          p[2] = kCylHalfHeight * (2.0 * b - 1.0);
        } else {
          const double rho = kCylRadius * std::sqrt(b);
          p[0] = rho * std::cos(phi);
          p[1] = rho * std::sin(phi);
          p[2] = (sel < lateral + cap) ? kCylHalfHeight : -kCylHalfHeight;
        }
        break;
      }
      case ShapeKind::Cone: {
        const double slant = std::sqrt(kConeRadius * kConeRadius + 4.0);
        const double lateral = kPi * kConeRadius * slant;
        const double base = kPi * kConeRadius * kConeRadius;
        const double sel = rng.next_double() * (lateral + base);
        const double a = rng.next_double();
        const double b = rng.next_double();
        const double phi = kTwoPi * b;
        if (sel < lateral) {
          // Area element grows linearly with distance from the apex.
          const double t = std::sqrt(a);
          p[0] = t * kConeRadius * std::cos(phi);
          p[1] = t * kConeRadius * std::sin(phi);
          p[2] = 1.0 - 2.0 * t;
        } else {
          const double rho = kConeRadius * std::sqrt(a);
          p[0] = rho * std::cos(phi);
          p[1] = rho * std::sin(phi);
          p[2] = -1.0;
        }
        break;
      }
      case ShapeKind::Torus: {
        // Rejection on the tube angle compensates for the outer rim having
        // more area than the inner rim.
        double theta;
        for (;;) {
          theta = kTwoPi * rng.next_double();
          const double accept = (kTorusMajor + kTorusMinor * std::cos(theta)) /
                                (kTorusMajor + kTorusMinor);
          if (rng.next_double() <= accept) break;
        }
        const double phi = kTwoPi * rng.next_double();
        const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
        p[0] = ring * std::cos(phi);
        p[1] = ring * std::sin(phi);
        p[2] = kTorusMinor * std::sin(theta);
        break;
      }
    }
  }
  return pts;
}

PointCloud normalize(PointCloud cloud) {
  const int n = cloud.size(), d = cloud.dim();
  if (n < 1) throw std::invalid_argument("normalize: empty cloud");
  Vec64 centroid(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) centroid[k] += cloud.points.at(i, k);
  for (int k = 0; k < d; ++k) centroid[k] /= n;
  double maxsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      const double v = cloud.points.at(i, k) - centroid[k];
      cloud.points.at(i, k) = v;
      s += v * v;
    }
    maxsq = std::max(maxsq, s);
  }
  if (maxsq > 0.0) {
    const double inv = 1.0 / std::sqrt(maxsq);
    for (double& v : cloud.points.data) v *= inv;
  }
  return cloud;
}

PointCloud generate_shape(ShapeKind kind, int n, uint64_t seed, double jitter) {
  if (jitter < 0.0) throw std::invalid_argument("generate_shape: jitter must be >= 0");
  SeededRng rng(seed);
  PointCloud cloud;
  cloud.points = sample_shape_surface(kind, n, rng);
  if (jitter > 0.0)
    for (double& v : cloud.points.data) v += jitter * rng.next_gaussian();
  cloud.source_id = std::string(shape_name(kind));
  return normalize(std::move(cloud));
}

// ---------------------------------------------------------------------------
// OFF meshes

namespace {

struct OffLine {
  std::vector<std::string> tokens;
  int number = 0;
};

// Comment-stripped, non-blank lines with their 1-based numbers.
std::vector<OffLine> off_lines(std::string_view text) {
  std::vector<OffLine> out;
  int number = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    ++number;
    if (const size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    OffLine parsed;
    parsed.number = number;
    std::istringstream ss{std::string(line)};
    std::string tok;
    while (ss >> tok) parsed.tokens.push_back(tok);
    if (!parsed.tokens.empty()) out.push_back(std::move(parsed));
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return out;
}

[[noreturn]] void off_fail(int line, const std::string& what) {
  throw ParseError("off parse error at line " + std::to_string(line) + ": " + what);
}

long parse_long(const std::string& tok, int line, const char* what) {
  size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    off_fail(line, std::string("bad ") + what + " '" + tok + "'");
  }
  if (used != tok.size()) off_fail(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

double parse_double(const std::string& tok, int line, const char* what) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    off_fail(line, std::string("bad ") + what + " '" + tok + "'");
  }
  if (used != tok.size()) off_fail(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

TriMesh parse_off(std::string_view text) {
  const auto lines = off_lines(text);
  if (lines.empty()) throw ParseError("off parse error at line 1: empty file");

  size_t cursor = 0;
  const OffLine& head = lines[cursor];
  std::vector<std::string> counts;
  int counts_line = head.number;
  if (head.tokens[0] == "OFF") {
    counts.assign(head.tokens.begin() + 1, head.tokens.end());
    if (counts.empty()) {
      if (++cursor >= lines.size()) off_fail(head.number, "missing vertex/face counts");
      counts = lines[cursor].tokens;
      counts_line = lines[cursor].number;
    }
  } else if (head.tokens[0].rfind("OFF", 0) == 0) {
    // ModelNet quirk: counts fused onto the header token ("OFF8 6 12").
    counts.push_back(head.tokens[0].substr(3));
    counts.insert(counts.end(), head.tokens.begin() + 1, head.tokens.end());
  } else {
    off_fail(head.number, "missing OFF header");
  }
  if (counts.size() < 2) off_fail(counts_line, "expected vertex and face counts");
  const long nv = parse_long(counts[0], counts_line, "vertex count");
  const long nf = parse_long(counts[1], counts_line, "face count");
  if (nv <= 0) off_fail(counts_line, "empty mesh (0 vertices)");
  if (nf < 0) off_fail(counts_line, "negative face count");

  TriMesh mesh;
  mesh.vertices.reserve(size_t(nv));
  for (long i = 0; i < nv; ++i) {
    if (++cursor >= lines.size())
      off_fail(lines.back().number, "unexpected end of file in vertex list");
    const OffLine& ln = lines[cursor];
    if (ln.tokens.size() < 3) off_fail(ln.number, "vertex needs 3 coordinates");
    mesh.vertices.push_back({parse_double(ln.tokens[0], ln.number, "coordinate"),
                             parse_double(ln.tokens[1], ln.number, "coordinate"),
                             parse_double(ln.tokens[2], ln.number, "coordinate")});
  }
  for (long f = 0; f < nf; ++f) {
    if (++cursor >= lines.size())
      off_fail(lines.back().number, "unexpected end of file in face list");
    const OffLine& ln = lines[cursor];
    const long k = parse_long(ln.tokens[0], ln.number, "face vertex count");
    if (k < 3) off_fail(ln.number, "face needs at least 3 vertices");
    if (long(ln.tokens.size()) < 1 + k) off_fail(ln.number, "face index list too short");
    std::vector<int> idx(static_cast<size_t>(k));
    for (long j = 0; j < k; ++j) {
      const long v = parse_long(ln.tokens[size_t(1 + j)], ln.number, "vertex index");
      if (v < 0 || v >= nv) off_fail(ln.number, "vertex index out of range");
      idx[size_t(j)] = int(v);
    }
    for (long j = 1; j + 1 < k; ++j) {
      const int a = idx[0], b = idx[size_t(j)], c = idx[size_t(j + 1)];
      if (a == b || b == c || a == c) continue;  // degenerate after triangulation
      mesh.faces.push_back({a, b, c});
    }
  }
  return mesh;
}

std::string serialize_off(const TriMesh& mesh) {
  std::string out = "OFF\n";
  out += std::to_string(mesh.vertices.size()) + " " + std::to_string(mesh.faces.size()) + " 0\n";
  for (const auto& v : mesh.vertices)
    out += format_g17(v[0]) + " " + format_g17(v[1]) + " " + format_g17(v[2]) + "\n";
  for (const auto& f : mesh.faces)
    out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " +
           std::to_string(f[2]) + "\n";
  return out;
}

PointCloud sample_surface(const TriMesh& mesh, int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_surface: n must be >= 1");
  if (mesh.faces.empty()) throw std::invalid_argument("sample_surface: mesh has no faces");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& a = mesh.vertices[size_t(mesh.faces[f][0])];
    const auto& b = mesh.vertices[size_t(mesh.faces[f][1])];
    const auto& c = mesh.vertices[size_t(mesh.faces[f][2])];
    const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
    const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
    const double cx = uy * vz - uz * vy;
    const double cy = uz * vx - ux * vz;
    const double cz = ux * vy - uy * vx;
    total += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_surface: mesh has zero total area");

  SeededRng rng(seed);
  PointCloud cloud;
  cloud.points = Mat64(n, 3);
  for (int i = 0; i < n; ++i) {
    const double t = rng.next_double() * total;
    const size_t f = size_t(std::upper_bound(cdf.begin(), cdf.end(), t) - cdf.begin());
    const auto& face = mesh.faces[std::min(f, mesh.faces.size() - 1)];
    const auto& a = mesh.vertices[size_t(face[0])];
    const auto& b = mesh.vertices[size_t(face[1])];
    const auto& c = mesh.vertices[size_t(face[2])];
    double u = rng.next_double(), v = rng.next_double();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    double* p = cloud.points.row(i);
    for (int k = 0; k < 3; ++k)
      p[k] = a[size_t(k)] + u * (b[size_t(k)] - a[size_t(k)]) + v * (c[size_t(k)] - a[size_t(k)]);
  }
  return normalize(std::move(cloud));
}

// ---------------------------------------------------------------------------
// Digits

PointCloud mnist_to_points(std::span<const uint8_t> image, int max_points, uint64_t seed) {
  if (image.size() != 784) throw std::invalid_argument("mnist_to_points: image must be 28x28");
  if (max_points < 1) throw std::invalid_argument("mnist_to_points: max_points must be >= 1");
  std::vector<std::array<double, 2>> pts;
  for (int row = 0; row < 28; ++row)
    for (int col = 0; col < 28; ++col)
      if (image[size_t(row * 28 + col)] > 127)
        pts.push_back({(col - 13.5) / 13.5, (row - 13.5) / 13.5});
  if (pts.empty()) throw std::invalid_argument("mnist_to_points: no pixels above threshold");

  if (int(pts.size()) > max_points) {
    SeededRng rng(seed);
    std::vector<int> idx(pts.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    // Partial Fisher-Yates: first max_points entries are the kept subset.
    for (int i = 0; i < max_points; ++i) {
      const int j = i + int(rng.next_below(uint64_t(idx.size() - size_t(i))));
      std::swap(idx[size_t(i)], idx[size_t(j)]);
    }
    idx.resize(size_t(max_points));
    std::sort(idx.begin(), idx.end());
    std::vector<std::array<double, 2>> kept;
    kept.reserve(idx.size());
    for (int i : idx) kept.push_back(pts[size_t(i)]);
    pts = std::move(kept);
  }

  PointCloud cloud;
  cloud.points = Mat64(int(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) {
    cloud.points.at(int(i), 0) = pts[i][0];
    cloud.points.at(int(i), 1) = pts[i][1];
  }
  return cloud;
}

namespace {

using Poly = std::vector<std::array<double, 2>>;

void add_arc(std::vector<Poly>& strokes, double cx, double cy, double rx, double ry,
             double t0, double t1, int segments = 24) {
  Poly poly;
  poly.reserve(size_t(segments + 1));
  for (int i = 0; i <= segments; ++i) {
    const double t = t0 + (t1 - t0) * double(i) / segments;
    poly.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  strokes.push_back(std::move(poly));
}

void add_line(std::vector<Poly>& strokes, std::initializer_list<std::array<double, 2>> pts) {
  strokes.emplace_back(pts);
}

// Glyph skeletons in the 28x28 frame, x right, y down.
std::vector<Poly> digit_strokes(int digit) {
  std::vector<Poly> s;
  switch (digit) {
    case 0:
      add_arc(s, 13.5, 13.5, 4.6, 7.4, 0.0, kTwoPi, 40);
      break;
    case 1:
      add_line(s, {{11.2, 8.2}, {13.8, 5.4}, {13.8, 22.0}});
      break;
    case 2:
      add_arc(s, 13.5, 9.2, 4.6, 4.2, kPi, 2.30 * kPi);
      add_line(s, {{16.2, 12.6}, {9.2, 21.6}, {18.6, 21.6}});
      break;
    case 3:
      add_arc(s, 13.0, 9.4, 4.4, 4.0, 1.25 * kPi, 2.45 * kPi);
      add_arc(s, 13.0, 17.0, 4.8, 4.6, 1.55 * kPi, 2.80 * kPi);
      break;
    case 4:
      add_line(s, {{14.6, 5.2}, {8.2, 15.6}, {18.8, 15.6}});
      add_line(s, {{15.6, 8.0}, {15.6, 22.2}});
      break;
    case 5:
      add_line(s, {{17.6, 5.6}, {10.2, 5.6}, {9.8, 12.2}});
      add_arc(s, 13.2, 16.2, 4.8, 4.9, 1.274 * kPi, 2.717 * kPi);
      break;
    case 6:
      add_line(s, {{16.6, 5.6}, {13.4, 8.0}, {11.2, 11.2}, {10.2, 14.6}, {10.1, 17.0}});
      add_arc(s, 13.3, 17.0, 3.6, 4.0, 0.0, kTwoPi, 32);
      break;
    case 7:
      add_line(s, {{9.2, 5.8}, {18.4, 5.8}, {11.6, 22.0}});
      break;
    case 8:
      add_arc(s, 13.5, 9.4, 3.5, 3.7, 0.0, kTwoPi, 32);
      add_arc(s, 13.5, 17.2, 4.2, 4.4, 0.0, kTwoPi, 32);
      break;
    case 9:
      add_arc(s, 13.1, 9.6, 3.9, 4.1, 0.0, kTwoPi, 32);
      add_line(s, {{17.0, 9.6}, {16.8, 15.0}, {15.6, 21.8}});
      break;
    default:
      throw std::invalid_argument("digit must be in [0, 9]");
  }
  return s;
}

double point_segment_dist(double px, double py, const std::array<double, 2>& a,
                          const std::array<double, 2>& b) {
  const double vx = b[0] - a[0], vy = b[1] - a[1];
  const double wx = px - a[0], wy = py - a[1];
  const double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

double clamp_sym(double v, double lim) { return std::clamp(v, -lim, lim); }

}  // namespace

std::array<uint8_t, 784> render_digit(int digit, SeededRng& rng) {
  std::vector<Poly> strokes = digit_strokes(digit);

  // Per-sample perturbation around the frame center.
  const double angle = clamp_sym(0.14 * rng.next_gaussian(), 0.35);
  const double sx = std::clamp(1.0 + 0.09 * rng.next_gaussian(), 0.80, 1.18);
  const double sy = std::clamp(1.0 + 0.09 * rng.next_gaussian(), 0.80, 1.18);
  const double shear = clamp_sym(0.09 * rng.next_gaussian(), 0.25);
  const double tx = clamp_sym(1.3 * rng.next_gaussian(), 2.8);
  const double ty = clamp_sym(1.3 * rng.next_gaussian(), 2.8);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (auto& poly : strokes)
    for (auto& p : poly) {
      double x = (p[0] - 13.5) * sx;
      double y = (p[1] - 13.5) * sy;
      x += shear * y;
      p[0] = 13.5 + ca * x - sa * y + tx;
      p[1] = 13.5 + sa * x + ca * y + ty;
    }

  const double width = std::min(1.15 + 0.22 * std::abs(rng.next_gaussian()), 1.9);
  const double ink = 255.0 * std::clamp(0.88 + 0.08 * rng.next_gaussian(), 0.82, 1.0);

  std::array<uint8_t, 784> img{};
  for (int row = 0; row < 28; ++row)
    for (int col = 0; col < 28; ++col) {
      double d = 1e30;
      for (const auto& poly : strokes)
        for (size_t i = 0; i + 1 < poly.size(); ++i)
          d = std::min(d, point_segment_dist(col, row, poly[i], poly[i + 1]));
      double v = 0.0;
      if (d <= width - 0.5) v = ink;
      else if (d < width + 0.5) v = ink * (width + 0.5 - d);
      v += 6.0 * rng.next_gaussian();
      img[size_t(row * 28 + col)] = uint8_t(std::clamp(v, 0.0, 255.0));
    }

  // Sparse salt speckles, sometimes above threshold.
  const int speckles = int(rng.next_below(4));
  for (int i = 0; i < speckles; ++i) {
    const size_t at = size_t(rng.next_below(784));
    img[at] = uint8_t(100 + rng.next_below(156));
  }
  return img;
}

// ---------------------------------------------------------------------------
// IDX containers

namespace {

uint32_t read_be32(std::span<const uint8_t> b, size_t at) {
  return (uint32_t(b[at]) << 24) | (uint32_t(b[at + 1]) << 16) | (uint32_t(b[at + 2]) << 8) |
         uint32_t(b[at + 3]);
}

void append_be32(std::string& out, uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

}  // namespace

std::vector<std::array<uint8_t, 784>> parse_idx_images(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16) throw ParseError("idx images: truncated header");
  if (read_be32(bytes, 0) != 0x00000803u)
    throw ParseError("idx images: bad magic (want 0x00000803)");
  const uint32_t n = read_be32(bytes, 4);
  const uint32_t rows = read_be32(bytes, 8);
  const uint32_t cols = read_be32(bytes, 12);
  if (rows != 28 || cols != 28) throw ParseError("idx images: expected 28x28 images");
  if (bytes.size() != 16 + size_t(n) * 784) throw ParseError("idx images: size mismatch");
  std::vector<std::array<uint8_t, 784>> images(n);
  for (uint32_t i = 0; i < n; ++i)
    std::copy_n(bytes.data() + 16 + size_t(i) * 784, 784, images[i].begin());
  return images;
}

std::vector<uint8_t> parse_idx_labels(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8) throw ParseError("idx labels: truncated header");
  if (read_be32(bytes, 0) != 0x00000801u)
    throw ParseError("idx labels: bad magic (want 0x00000801)");
  const uint32_t n = read_be32(bytes, 4);
  if (bytes.size() != 8 + size_t(n)) throw ParseError("idx labels: size mismatch");
  return std::vector<uint8_t>(bytes.begin() + 8, bytes.end());
}

std::string encode_idx_images(const std::vector<std::array<uint8_t, 784>>& images) {
  std::string out;
  out.reserve(16 + images.size() * 784);
  append_be32(out, 0x00000803u);
  append_be32(out, uint32_t(images.size()));
  append_be32(out, 28);
  append_be32(out, 28);
  for (const auto& img : images) out.append(reinterpret_cast<const char*>(img.data()), 784);
  return out;
}

std::string encode_idx_labels(const std::vector<uint8_t>& labels) {
  std::string out;
  out.reserve(8 + labels.size());
  append_be32(out, 0x00000801u);
  append_be32(out, uint32_t(labels.size()));
  out.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

DatasetSplit stratified_subset(const DatasetSplit& split, double fraction, uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("stratified_subset: fraction must be in (0, 1]");
  std::vector<std::vector<int>> by_class(split.class_names.size());
  for (size_t i = 0; i < split.clouds.size(); ++i) {
    const auto& c = split.clouds[i];
    if (!c.label || *c.label < 0 || *c.label >= int(by_class.size()))
      throw std::invalid_argument("stratified_subset: cloud without valid label");
    by_class[size_t(*c.label)].push_back(int(i));
  }
  std::vector<int> keep;
  for (size_t cls = 0; cls < by_class.size(); ++cls) {
    auto idx = by_class[cls];
    const int want = int(std::ceil(fraction * double(idx.size())));
    SeededRng rng(derive_seed(seed, split.class_names[cls]));
    shuffle_indices(idx, rng);
    idx.resize(size_t(std::min<size_t>(size_t(want), idx.size())));
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  DatasetSplit out;
  out.class_names = split.class_names;
  out.fraction = fraction;
  out.clouds.reserve(keep.size());
  for (int i : keep) out.clouds.push_back(split.clouds[size_t(i)]);
  return out;
}

DatasetSplit make_shape_dataset(int per_class, int points_per_cloud, double jitter,
                                uint64_t seed, std::string_view tag) {
  DatasetSplit out;
  out.class_names = shape_class_names();
  for (int cls = 0; cls < int(out.class_names.size()); ++cls) {
    const ShapeKind kind = ShapeKind(cls);
    for (int i = 0; i < per_class; ++i) {
      char sid[64];
      std::snprintf(sid, sizeof sid, "%.*s/%s/%04d", int(tag.size()), tag.data(),
                    std::string(shape_name(kind)).c_str(), i);
      PointCloud cloud = generate_shape(kind, points_per_cloud, derive_seed(seed, sid), jitter);
      cloud.label = cls;
      cloud.source_id = sid;
      out.clouds.push_back(std::move(cloud));
    }
  }
  return out;
}

DatasetSplit make_digit_dataset(int per_class, int max_points, uint64_t seed,
                                std::string_view tag) {
  DatasetSplit out;
  for (int d = 0; d < 10; ++d) out.class_names.push_back(std::to_string(d));
  for (int d = 0; d < 10; ++d)
    for (int i = 0; i < per_class; ++i) {
      char sid[64];
      std::snprintf(sid, sizeof sid, "%.*s/%d/%04d", int(tag.size()), tag.data(), d, i);
      SeededRng rng(derive_seed(seed, sid));
      const auto img = render_digit(d, rng);
      PointCloud cloud =
          mnist_to_points(img, max_points, derive_seed(seed, std::string(sid) + "/sub"));
      cloud.label = d;
      cloud.source_id = sid;
      out.clouds.push_back(std::move(cloud));
    }
  return out;
}

DatasetSplit make_digit_dataset_from_idx(const std::filesystem::path& images_path,
                                         const std::filesystem::path& labels_path,
                                         int per_class, int max_points, uint64_t seed,
                                         std::string_view tag) {
  const std::string ibytes = read_file(images_path);
  const std::string lbytes = read_file(labels_path);
  const auto images =
      parse_idx_images({reinterpret_cast<const uint8_t*>(ibytes.data()), ibytes.size()});
  const auto labels =
      parse_idx_labels({reinterpret_cast<const uint8_t*>(lbytes.data()), lbytes.size()});
  if (images.size() != labels.size())
    throw ParseError("idx: image/label count mismatch");

  DatasetSplit out;
  for (int d = 0; d < 10; ++d) out.class_names.push_back(std::to_string(d));
  std::array<int, 10> taken{};
  for (size_t i = 0; i < images.size(); ++i) {
    const int d = labels[i];
    if (d < 0 || d > 9) throw ParseError("idx: label out of range");
    if (taken[size_t(d)] >= per_class) continue;
    char sid[64];
    std::snprintf(sid, sizeof sid, "%.*s/%d/%04d", int(tag.size()), tag.data(), d,
                  taken[size_t(d)]);
    PointCloud cloud = mnist_to_points(images[i], max_points,
                                       derive_seed(seed, std::string(sid) + "/sub"));
    cloud.label = d;
    cloud.source_id = sid;
    out.clouds.push_back(std::move(cloud));
    ++taken[size_t(d)];
  }
  for (int d = 0; d < 10; ++d)
    if (taken[size_t(d)] < per_class)
      throw std::invalid_argument("idx: not enough samples of digit " + std::to_string(d));
  return out;
}

// ---------------------------------------------------------------------------
// Disk formats

void save_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out = cloud.dim() == 2 ? "x,y\n" : "x,y,z\n";
  for (int i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < cloud.dim(); ++k) {
      if (k) out += ',';
      out += format_g17(cloud.points.at(i, k));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

Mat64 load_cloud_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw ParseError(path.string() + ": empty cloud file");
  const int dim = line == "x,y" ? 2 : line == "x,y,z" ? 3 : 0;
  if (dim == 0) throw ParseError(path.string() + ": bad header '" + line + "'");
  std::vector<double> values;
  int lineno = 1;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    int cells = 0;
    while (std::getline(ls, cell, ',')) {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
      }
      if (used != cell.size())
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
      values.push_back(v);
      ++cells;
    }
    if (cells != dim)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
  }
  if (values.empty()) throw ParseError(path.string() + ": no points");
  Mat64 pts(int(values.size()) / dim, dim);
  pts.data = std::move(values);
  return pts;
}

namespace {

void save_split(const std::filesystem::path& dir, const DatasetSplit& split,
                std::string_view name, std::string& manifest) {
  for (size_t i = 0; i < split.clouds.size(); ++i) {
    const PointCloud& cloud = split.clouds[i];
    if (!cloud.label) throw std::invalid_argument("save_dataset: cloud without label");
    const std::string& cls = split.class_names.at(size_t(*cloud.label));
    char rel[96];
    std::snprintf(rel, sizeof rel, "%.*s/%s_%05d.csv", int(name.size()), name.data(),
                  cls.c_str(), int(i));
    save_cloud_csv(cloud, dir / rel);
    nlohmann::json line = {{"path", rel},
                           {"label", *cloud.label},
                           {"class", cls},
                           {"split", std::string(name)}};
    manifest += line.dump() + "\n";
  }
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const DatasetSplit& train,
                  const DatasetSplit& test) {
  if (train.class_names != test.class_names && !test.clouds.empty())
    throw std::invalid_argument("save_dataset: class name mismatch between splits");
  std::string manifest;
  save_split(dir, train, "train", manifest);
  save_split(dir, test, "test", manifest);
  write_file_atomic(dir / "manifest.jsonl", manifest);
}

DatasetSplit load_dataset(const std::filesystem::path& dir, std::string_view split) {
  const std::string text = read_file(dir / "manifest.jsonl");
  std::istringstream ss(text);
  std::string line;
  DatasetSplit out;
  std::vector<std::pair<int, std::string>> classes;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest.jsonl:" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("path") || !j.contains("label") || !j.contains("class") ||
        !j.contains("split"))
      throw ParseError("manifest.jsonl:" + std::to_string(lineno) + ": missing field");
    const int label = j["label"].get<int>();
    classes.emplace_back(label, j["class"].get<std::string>());
    if (j["split"].get<std::string>() != split) continue;
    PointCloud cloud;
    cloud.points = load_cloud_csv(dir / j["path"].get<std::string>());
    cloud.label = label;
    cloud.source_id = j["path"].get<std::string>();
    out.clouds.push_back(std::move(cloud));
  }
  int max_label = -1;
  for (const auto& [label, name] : classes) max_label = std::max(max_label, label);
  out.class_names.assign(size_t(max_label + 1), "");
  for (const auto& [label, name] : classes) {
    if (label < 0) throw ParseError("manifest.jsonl: negative label");
    auto& slot = out.class_names[size_t(label)];
    if (!slot.empty() && slot != name)
      throw ParseError("manifest.jsonl: conflicting names for label " + std::to_string(label));
    slot = name;
  }
  for (const auto& name : out.class_names)
    if (name.empty()) throw ParseError("manifest.jsonl: labels are not contiguous from 0");
  return out;
}

}  // namespace neaw
