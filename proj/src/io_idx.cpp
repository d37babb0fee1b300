#include <array>
#include <cmath>
#include <fstream>

#include "reconbound/errors.hpp"
#include "reconbound/io.hpp"

namespace reconbound {

namespace {

uint32_t read_u32be(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw DataError("idx: truncated header in " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_u32be(std::ofstream& f, uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

IdxImages parse_idx_images(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("idx: cannot open " + path);
  const uint32_t magic = read_u32be(f, path);
  if (magic != 0x00000803u)
    throw DataError("idx: bad image magic in " + path + " (want 0x803)");
  IdxImages out;
  out.count = read_u32be(f, path);
  out.rows = read_u32be(f, path);
  out.cols = read_u32be(f, path);
  if (out.count < 0 || out.rows <= 0 || out.cols <= 0)
    throw DataError("idx: nonsensical dimensions in " + path);
  const int64_t total = out.count * out.rows * out.cols;
  out.pixels.resize(static_cast<size_t>(total));
  f.read(reinterpret_cast<char*>(out.pixels.data()), total);
  if (!f) throw DataError("idx: truncated pixel data in " + path);
  char extra;
  if (f.read(&extra, 1)) throw DataError("idx: trailing bytes in " + path);
  return out;
}

IdxLabels parse_idx_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("idx: cannot open " + path);
  const uint32_t magic = read_u32be(f, path);
  if (magic != 0x00000801u)
    throw DataError("idx: bad label magic in " + path + " (want 0x801)");
  const uint32_t count = read_u32be(f, path);
  IdxLabels out;
  out.labels.resize(count);
  f.read(reinterpret_cast<char*>(out.labels.data()), count);
  if (!f) throw DataError("idx: truncated label data in " + path);
  char extra;
  if (f.read(&extra, 1)) throw DataError("idx: trailing bytes in " + path);
  return out;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  if (images.count * images.rows * images.cols !=
      static_cast<int64_t>(images.pixels.size()))
    throw DataError("idx: pixel buffer does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("idx: cannot open " + path + " for writing");
  write_u32be(f, 0x00000803u);
  write_u32be(f, static_cast<uint32_t>(images.count));
  write_u32be(f, static_cast<uint32_t>(images.rows));
  write_u32be(f, static_cast<uint32_t>(images.cols));
  f.write(reinterpret_cast<const char*>(images.pixels.data()),
          static_cast<std::streamsize>(images.pixels.size()));
  if (!f) throw DataError("idx: write failed for " + path);
}

void write_idx_labels(const std::string& path, const IdxLabels& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("idx: cannot open " + path + " for writing");
  write_u32be(f, 0x00000801u);
  write_u32be(f, static_cast<uint32_t>(labels.labels.size()));
  f.write(reinterpret_cast<const char*>(labels.labels.data()),
          static_cast<std::streamsize>(labels.labels.size()));
  if (!f) throw DataError("idx: write failed for " + path);
}

Dataset idx_to_dataset(const IdxImages& images, const IdxLabels& labels, Box box) {
  if (images.count != static_cast<int64_t>(labels.labels.size()))
    throw DataError("idx: image/label count mismatch");
  if (!(box.hi > box.lo)) throw ConfigError("idx: box must have positive diameter");
  Dataset out;
  out.box = box;
  out.num_classes = 10;
  const int64_t d = images.rows * images.cols;
  const double scale = box.diameter() / 255.0;
  out.samples.reserve(static_cast<size_t>(images.count));
  for (int64_t i = 0; i < images.count; ++i) {
    Sample z;
    z.x = Tensor::zeros({d});
    for (int64_t j = 0; j < d; ++j)
      z.x[j] = box.lo + scale * static_cast<double>(images.pixels[i * d + j]);
    z.label = labels.labels[static_cast<size_t>(i)];
    out.samples.push_back(std::move(z));
  }
  return out;
}

Dataset filter_binary(const Dataset& data, int class_a, int class_b, int64_t limit) {
  if (class_a == class_b) throw ConfigError("filter_binary: classes must differ");
  int64_t seen_a = 0, seen_b = 0;
  for (const Sample& z : data.samples) {
    seen_a += (z.label == class_a);
    seen_b += (z.label == class_b);
  }
  if (seen_a == 0)
    throw DataError("filter_binary: no samples of class " + std::to_string(class_a));
  if (seen_b == 0)
    throw DataError("filter_binary: no samples of class " + std::to_string(class_b));
  Dataset out;
  out.box = data.box;
  out.num_classes = 2;
  for (const Sample& z : data.samples) {
    if (z.label != class_a && z.label != class_b) continue;
    Sample copy = z;
    copy.label = (z.label == class_b) ? 1 : 0;
    out.samples.push_back(std::move(copy));
    if (limit > 0 && out.n() >= limit) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Procedural digits.

namespace {

using Point = std::array<double, 2>;
using Stroke = std::vector<Point>;

Stroke arc(double cx, double cy, double rx, double ry, double a0_deg, double a1_deg,
           int segments = 28) {
  Stroke s;
  s.reserve(static_cast<size_t>(segments) + 1);
  const double a0 = a0_deg * M_PI / 180.0, a1 = a1_deg * M_PI / 180.0;
  for (int k = 0; k <= segments; ++k) {
    const double a = a0 + (a1 - a0) * k / segments;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

std::vector<Stroke> digit_strokes(int digit) {
  switch (digit) {
    case 0:
      return {arc(0.50, 0.50, 0.22, 0.32, 0, 360, 40)};
    case 1:
      return {{{0.35, 0.30}, {0.52, 0.16}}, {{0.52, 0.16}, {0.52, 0.84}},
              {{0.38, 0.84}, {0.66, 0.84}}};
    case 2:
      return {arc(0.49, 0.34, 0.19, 0.18, 180, 360),
              {{0.68, 0.36}, {0.30, 0.84}},
              {{0.30, 0.84}, {0.72, 0.84}}};
    case 3:
      return {arc(0.47, 0.33, 0.20, 0.17, -140, 80),
              arc(0.47, 0.67, 0.21, 0.18, -80, 140)};
    case 4:
      return {{{0.62, 0.16}, {0.24, 0.62}}, {{0.24, 0.62}, {0.78, 0.62}},
              {{0.62, 0.16}, {0.62, 0.86}}};
    case 5:
      return {{{0.68, 0.18}, {0.32, 0.18}}, {{0.32, 0.18}, {0.30, 0.48}},
              arc(0.46, 0.64, 0.22, 0.20, -95, 160)};
    case 6:
      return {{{0.62, 0.18}, {0.46, 0.30}, {0.37, 0.50}, {0.38, 0.70}},
              arc(0.51, 0.68, 0.15, 0.14, 0, 360, 32)};
    case 7:
      return {{{0.28, 0.18}, {0.72, 0.18}}, {{0.72, 0.18}, {0.42, 0.85}}};
    case 8:
      return {arc(0.50, 0.33, 0.17, 0.15, 0, 360, 32),
              arc(0.50, 0.67, 0.19, 0.17, 0, 360, 32)};
    case 9:
      return {arc(0.46, 0.34, 0.16, 0.14, 0, 360, 32),
              {{0.62, 0.34}, {0.60, 0.62}, {0.52, 0.85}}};
    default:
      throw ConfigError("digit corpus: digit out of range");
  }
}

double dist_to_segment(const Point& p, const Point& a, const Point& b) {
  const double vx = b[0] - a[0], vy = b[1] - a[1];
  const double wx = p[0] - a[0], wy = p[1] - a[1];
  const double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

SyntheticCorpus generate_digit_corpus(const SyntheticConfig& cfg) {
  if (cfg.per_class <= 0) throw ConfigError("digit corpus: per_class must be positive");
  if (cfg.digits.empty()) throw ConfigError("digit corpus: empty digit list");
  if (cfg.rows < 8 || cfg.cols < 8) throw ConfigError("digit corpus: grid too small");

  SyntheticCorpus out;
  out.images.rows = cfg.rows;
  out.images.cols = cfg.cols;
  Rng root(cfg.seed);

  int64_t img_index = 0;
  for (int64_t k = 0; k < cfg.per_class; ++k) {
    for (int digit : cfg.digits) {
      Rng rng = root.substream(static_cast<uint64_t>(img_index));
      const std::vector<Stroke> base = digit_strokes(digit);

      // Random similarity + shear around the glyph center.
      const double scale = rng.uniform(0.85, 1.12);
      const double theta = rng.uniform(-0.12, 0.12);
      const double shear = rng.uniform(-0.08, 0.08);
      const double dx = rng.uniform(-0.06, 0.06);
      const double dy = rng.uniform(-0.06, 0.06);
      const double ct = std::cos(theta), st = std::sin(theta);
      auto xform = [&](const Point& p) -> Point {
        const double cx = p[0] - 0.5, cy = p[1] - 0.5;
        const double sx = cx + shear * cy, sy = cy;
        return {0.5 + scale * (ct * sx - st * sy) + dx,
                0.5 + scale * (st * sx + ct * sy) + dy};
      };
      std::vector<Stroke> strokes;
      strokes.reserve(base.size());
      for (const Stroke& s : base) {
        Stroke t;
        t.reserve(s.size());
        for (const Point& p : s) t.push_back(xform(p));
        strokes.push_back(std::move(t));
      }

      const double thick = rng.uniform(0.035, 0.06);
      const double soft = 0.022;
      const double intensity = rng.uniform(0.75, 1.0);

      for (int64_t r = 0; r < cfg.rows; ++r) {
        for (int64_t c = 0; c < cfg.cols; ++c) {
          const Point p = {(c + 0.5) / static_cast<double>(cfg.cols),
                           (r + 0.5) / static_cast<double>(cfg.rows)};
          double dmin = 1e9;
          for (const Stroke& s : strokes)
            for (size_t i = 0; i + 1 < s.size(); ++i)
              dmin = std::min(dmin, dist_to_segment(p, s[i], s[i + 1]));
          double v = intensity * std::clamp((thick + soft - dmin) / soft, 0.0, 1.0);
          v += cfg.noise * rng.next_gaussian();
          v = std::clamp(v, 0.0, 1.0);
          out.images.pixels.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
        }
      }
      out.labels.labels.push_back(static_cast<uint8_t>(digit));
      ++img_index;
    }
  }
  out.images.count = img_index;
  return out;
}

}  // namespace reconbound
