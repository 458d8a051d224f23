#include "otfit/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "otfit/error.hpp"

namespace otfit {

PointSet::PointSet(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0 && !data_.empty()) throw InvalidInput("PointSet: zero dimension with data");
  if (dim_ != 0 && data_.size() % dim_ != 0) {
    throw InvalidInput("PointSet: data length is not a multiple of the dimension");
  }
}

PointSet PointSet::from_points(const std::vector<Point>& points) {
  if (points.empty()) return {};
  PointSet out(0, points.front().size());
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p);
  return out;
}

void PointSet::push_back(PointView p) {
  if (dim_ == 0 && data_.empty()) dim_ = p.size();
  if (p.size() != dim_) throw InvalidInput("PointSet: dimension mismatch on insert");
  data_.insert(data_.end(), p.begin(), p.end());
}

Dataset::Dataset(PointSet points, std::string source_tag)
    : points_(std::move(points)), source_tag_(std::move(source_tag)) {
  if (points_.size() == 0) throw InvalidInput("Dataset must hold at least one point");
  for (double v : points_.data()) {
    if (!std::isfinite(v)) throw InvalidInput("Dataset contains a non-finite coordinate");
  }
}

double Dataset::diameter() const {
  const std::size_t d = dim();
  std::vector<double> lo(d, INFINITY), hi(d, -INFINITY);
  for (std::size_t i = 0; i < size(); ++i) {
    auto p = points_.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  return std::sqrt(s);
}

}  // namespace otfit
