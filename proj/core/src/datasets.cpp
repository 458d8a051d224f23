#include "otfit/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "otfit/binary_io.hpp"
#include "otfit/error.hpp"
#include "otfit/rng.hpp"

namespace otfit {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::Ring: return "ring";
    case SyntheticKind::Line: return "line";
    case SyntheticKind::GaussianMixture: return "gmm";
    case SyntheticKind::TwoMoons: return "moons";
  }
  return "?";
}

SyntheticKind parse_synthetic_kind(const std::string& text) {
  if (text == "ring") return SyntheticKind::Ring;
  if (text == "line") return SyntheticKind::Line;
  if (text == "gmm" || text == "gaussian_mixture") return SyntheticKind::GaussianMixture;
  if (text == "moons" || text == "two_moons") return SyntheticKind::TwoMoons;
  throw InvalidInput("unknown synthetic kind '" + text + "' (expected ring, line, gmm or moons)");
}

void SyntheticSpec::validate() const {
  if (n_points < 1) throw InvalidInput("synthetic n_points must be >= 1");
  switch (kind) {
    case SyntheticKind::Ring:
      if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidInput("ring radius must be > 0");
      if (!(thickness >= 0.0 && thickness <= radius)) throw InvalidInput("ring thickness must be in [0, radius]");
      break;
    case SyntheticKind::Line:
      if (!(half_length > 0.0) || !std::isfinite(half_length)) throw InvalidInput("line half_length must be > 0");
      if (!std::isfinite(angle)) throw InvalidInput("line angle must be finite");
      if (!(jitter >= 0.0)) throw InvalidInput("line jitter must be >= 0");
      break;
    case SyntheticKind::GaussianMixture: {
      if (means.empty()) throw InvalidInput("mixture needs at least one mean");
      if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("mixture scale must be > 0");
      const std::size_t d = means.front().size();
      if (d == 0) throw InvalidInput("mixture means must be non-empty");
      for (const auto& m : means) {
        if (m.size() != d) throw InvalidInput("mixture means must share one dimension");
        for (double v : m) {
          if (!std::isfinite(v)) throw InvalidInput("mixture means must be finite");
        }
      }
      break;
    }
    case SyntheticKind::TwoMoons:
      if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidInput("moons noise must be >= 0");
      break;
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, {0xda7a, static_cast<std::uint64_t>(spec.kind)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t n = spec.n_points;

  PointSet pts;
  switch (spec.kind) {
    case SyntheticKind::Ring: {
      pts = PointSet(n, 2);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = two_pi * unit(rng);
        const double r = spec.radius + spec.thickness * (2.0 * unit(rng) - 1.0);
        pts.row(i)[0] = r * std::cos(t);
        pts.row(i)[1] = r * std::sin(t);
      }
      break;
    }
    case SyntheticKind::Line: {
      pts = PointSet(n, 2);
      const double c = std::cos(spec.angle), s = std::sin(spec.angle);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = n == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        const double along = spec.half_length * u;
        const double across = spec.jitter > 0.0 ? spec.jitter * normal(rng) : 0.0;
        pts.row(i)[0] = along * c - across * s;
        pts.row(i)[1] = along * s + across * c;
      }
      break;
    }
    case SyntheticKind::GaussianMixture: {
      const std::size_t d = spec.means.front().size();
      pts = PointSet(n, d);
      std::uniform_int_distribution<std::size_t> pick(0, spec.means.size() - 1);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& m = spec.means[pick(rng)];
        for (std::size_t k = 0; k < d; ++k) pts.row(i)[k] = m[k] + spec.scale * normal(rng);
      }
      break;
    }
    case SyntheticKind::TwoMoons: {
      pts = PointSet(n, 2);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = std::numbers::pi * unit(rng);
        const bool upper = i % 2 == 0;
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        if (spec.noise > 0.0) {
          x += spec.noise * normal(rng);
          y += spec.noise * normal(rng);
        }
        pts.row(i)[0] = x;
        pts.row(i)[1] = y;
      }
      break;
    }
  }
  return Dataset(std::move(pts), to_string(spec.kind) + ":" + std::to_string(spec.seed));
}

Dataset load_idx_images(const std::filesystem::path& path, std::size_t limit) {
  if (limit == 0) throw InvalidInput("load_idx_images: limit must be >= 1");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  const auto magic = io::read_u32_be(is);
  if (magic != kIdxImages) {
    std::ostringstream msg;
    msg << path.string() << ": bad IDX image magic 0x" << std::hex << magic;
    throw FormatError(FormatErrorKind::BadMagic, msg.str());
  }
  const auto count = io::read_u32_be(is);
  const auto rows = io::read_u32_be(is);
  const auto cols = io::read_u32_be(is);
  if (rows == 0 || cols == 0) throw FormatError(FormatErrorKind::Malformed, path.string() + ": zero image size");
  if (limit > count) {
    throw InvalidInput("load_idx_images: limit " + std::to_string(limit) + " exceeds the " + std::to_string(count) +
                       " images in " + path.string());
  }
  const std::size_t d = static_cast<std::size_t>(rows) * cols;
  std::string bytes(limit * d, '\0');
  io::read_bytes(is, bytes.data(), bytes.size());
  PointSet pts(limit, d);
  auto& data = pts.data();
  for (std::size_t k = 0; k < bytes.size(); ++k) data[k] = static_cast<unsigned char>(bytes[k]) / 255.0;
  return Dataset(std::move(pts), path.filename().string());
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path, std::size_t limit) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  if (io::read_u32_be(is) != kIdxLabels) throw FormatError(FormatErrorKind::BadMagic, path.string() + ": bad IDX label magic");
  const auto count = io::read_u32_be(is);
  if (limit > count) throw InvalidInput("load_idx_labels: limit exceeds item count");
  std::vector<std::uint8_t> out(limit);
  io::read_bytes(is, reinterpret_cast<char*>(out.data()), limit);
  return out;
}

void write_idx_images(const std::filesystem::path& path, const PointSet& points, std::uint32_t rows,
                      std::uint32_t cols) {
  if (static_cast<std::size_t>(rows) * cols != points.dim()) {
    throw InvalidInput("write_idx_images: rows * cols != point dimension");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  io::write_u32_be(os, kIdxImages);
  io::write_u32_be(os, static_cast<std::uint32_t>(points.size()));
  io::write_u32_be(os, rows);
  io::write_u32_be(os, cols);
  std::string bytes(points.data().size(), '\0');
  for (std::size_t k = 0; k < bytes.size(); ++k) {
    const double v = std::clamp(points.data()[k], 0.0, 1.0);
    bytes[k] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  io::write_bytes(os, bytes);
  if (!os) throw FormatError(FormatErrorKind::Io, "write failed: " + path.string());
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  io::write_u32_be(os, kIdxLabels);
  io::write_u32_be(os, static_cast<std::uint32_t>(labels.size()));
  io::write_bytes(os, std::string_view(reinterpret_cast<const char*>(labels.data()), labels.size()));
}

namespace {

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t end = line.find(',', pos);
    if (end == std::string::npos) end = line.size();
    std::size_t b = pos, e = end;
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, v);
    if (ec != std::errc() || ptr != line.data() + e || b == e) return false;
    out.push_back(v);
    pos = end + 1;
  }
  return true;
}

}  // namespace

Dataset load_csv_points(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::vector<double> row;
  PointSet pts;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!parse_row(line, row)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw FormatError(FormatErrorKind::Malformed, path.string() + ":" + std::to_string(line_no) + ": not a numeric row");
    }
    first = false;
    if (pts.dim() == 0) pts = PointSet(0, row.size());
    if (row.size() != pts.dim()) {
      throw FormatError(FormatErrorKind::Malformed,
                        path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(pts.dim()) +
                            " columns, got " + std::to_string(row.size()));
    }
    pts.push_back(row);
  }
  if (pts.size() == 0) throw InvalidInput(path.string() + ": no points");
  return Dataset(std::move(pts), path.filename().string());
}

void write_csv_points(const std::filesystem::path& path, const PointSet& points, const std::vector<std::string>& header) {
  std::ofstream os(path);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  if (!header.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
  }
  char buf[32];
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto r = points.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const auto res = std::to_chars(buf, buf + sizeof buf, r[k]);
      if (k) os << ',';
      os.write(buf, res.ptr - buf);
    }
    os << '\n';
  }
  if (!os) throw FormatError(FormatErrorKind::Io, "write failed: " + path.string());
}

std::string to_string(NormalizeMode m) {
  switch (m) {
    case NormalizeMode::None: return "none";
    case NormalizeMode::UnitBox: return "unit_box";
    case NormalizeMode::Standardize: return "standardize";
  }
  return "?";
}

NormalizeMode parse_normalize_mode(const std::string& text) {
  if (text == "none") return NormalizeMode::None;
  if (text == "unit_box") return NormalizeMode::UnitBox;
  if (text == "standardize") return NormalizeMode::Standardize;
  throw InvalidInput("unknown normalize mode '" + text + "' (expected none, unit_box or standardize)");
}

Point AffineTransform::apply(PointView x) const {
  if (x.size() != shift.size()) throw InvalidInput("AffineTransform: dimension mismatch");
  Point out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - shift[k]) / scale[k];
  return out;
}

Point AffineTransform::inverse(PointView x) const {
  if (x.size() != shift.size()) throw InvalidInput("AffineTransform: dimension mismatch");
  Point out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * scale[k] + shift[k];
  return out;
}

PointSet AffineTransform::apply(const PointSet& xs) const {
  PointSet out(0, xs.dim());
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(apply(xs.row(i)));
  return out;
}

PointSet AffineTransform::inverse(const PointSet& xs) const {
  PointSet out(0, xs.dim());
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(inverse(xs.row(i)));
  return out;
}

Normalized normalize(const Dataset& dataset, NormalizeMode mode) {
  const std::size_t d = dataset.dim(), n = dataset.size();
  AffineTransform t;
  t.shift.assign(d, 0.0);
  t.scale.assign(d, 1.0);
  if (mode != NormalizeMode::None) {
    for (std::size_t k = 0; k < d; ++k) {
      double lo = INFINITY, hi = -INFINITY, sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = dataset[i][k];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      if (mode == NormalizeMode::UnitBox) {
        if (hi > lo) {
          t.shift[k] = lo;
          t.scale[k] = hi - lo;
        } else {
          t.passthrough.push_back(k);
        }
      } else {
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (dataset[i][k] - mean) * (dataset[i][k] - mean);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        if (sd > 0.0) {
          t.shift[k] = mean;
          t.scale[k] = sd;
        } else {
          t.passthrough.push_back(k);
        }
      }
    }
  }
  Dataset out(mode == NormalizeMode::None ? dataset.points() : t.apply(dataset.points()), dataset.source_tag());
  return {std::move(out), std::move(t)};
}

}  // namespace otfit
