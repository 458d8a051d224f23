#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace otfit {

/// Owning point in R^D.
using Point = std::vector<double>;
/// Non-owning view of one point.
using PointView = std::span<const double>;

/// Dense row-major set of points sharing one dimension.
class PointSet {
 public:
  PointSet() = default;
  PointSet(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0) {}
  PointSet(std::size_t dim, std::vector<double> data);

  static PointSet from_points(const std::vector<Point>& points);

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return data_.empty(); }

  PointView row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  PointView operator[](std::size_t i) const { return row(i); }

  void push_back(PointView p);
  void reserve(std::size_t count) { data_.reserve(count * dim_); }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Target points y_1..y_N of the empirical measure. Weights are uniform
/// (1/N) and never stored.
class Dataset {
 public:
  Dataset() = default;
  /// Throws InvalidInput when empty or any coordinate is non-finite.
  Dataset(PointSet points, std::string source_tag);

  std::size_t size() const noexcept { return points_.size(); }
  std::size_t dim() const noexcept { return points_.dim(); }
  PointView operator[](std::size_t i) const { return points_.row(i); }

  const PointSet& points() const noexcept { return points_; }
  const std::string& source_tag() const noexcept { return source_tag_; }

  /// Largest coordinate-box diagonal (L2) over the points.
  double diameter() const;

 private:
  PointSet points_;
  std::string source_tag_;
};

}  // namespace otfit
