#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "otfit/dataset.hpp"

namespace otfit {

enum class SyntheticKind { Ring, Line, GaussianMixture, TwoMoons };

std::string to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string& text);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Ring;
  std::size_t n_points = 500;
  std::uint64_t seed = 0;

  // Ring: radius uniform in [radius - thickness, radius + thickness],
  // angle uniform.
  double radius = 1.0;
  double thickness = 0.1;

  // Line: segment from -half_length to +half_length along `angle`
  // (radians), evenly spaced when jitter = 0.
  double half_length = 0.5;
  double angle = 0.0;
  double jitter = 0.0;

  // Gaussian mixture: isotropic components with equal weights.
  std::vector<Point> means = {{-1.0, 0.0}, {1.0, 0.0}};
  double scale = 0.1;

  // Two moons: additive isotropic noise.
  double noise = 0.05;

  void validate() const;
};

/// Deterministic given the spec (including its seed).
Dataset generate_synthetic(const SyntheticSpec& spec);

/// First `limit` images of an IDX3 file (magic 0x00000803), flattened to
/// rows x cols coordinates in [0, 1].
Dataset load_idx_images(const std::filesystem::path& path, std::size_t limit);
/// First `limit` labels of an IDX1 file (magic 0x00000801).
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path, std::size_t limit);

/// Writes points as an IDX3 file, each coordinate rounded from [0, 1] to a
/// byte. rows * cols must equal the dimension.
void write_idx_images(const std::filesystem::path& path, const PointSet& points, std::uint32_t rows,
                      std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// One point per line, comma-separated. A first line that does not parse
/// as numbers is taken as a header.
Dataset load_csv_points(const std::filesystem::path& path);
void write_csv_points(const std::filesystem::path& path, const PointSet& points,
                      const std::vector<std::string>& header = {});

enum class NormalizeMode { None, UnitBox, Standardize };

std::string to_string(NormalizeMode m);
NormalizeMode parse_normalize_mode(const std::string& text);

/// Per-coordinate affine map x' = (x - shift) / scale.
struct AffineTransform {
  std::vector<double> shift;
  std::vector<double> scale;
  /// Coordinates left unchanged because they have zero spread.
  std::vector<std::size_t> passthrough;

  Point apply(PointView x) const;
  Point inverse(PointView x) const;
  PointSet apply(const PointSet& xs) const;
  PointSet inverse(const PointSet& xs) const;
  bool warned() const noexcept { return !passthrough.empty(); }
};

struct Normalized {
  Dataset dataset;
  AffineTransform transform;
};

Normalized normalize(const Dataset& dataset, NormalizeMode mode);

}  // namespace otfit
