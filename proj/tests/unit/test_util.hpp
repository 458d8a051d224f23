#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "otfit/dataset.hpp"
#include "otfit/netcore.hpp"

namespace otfit::testing {

inline Dataset points_1d(std::initializer_list<double> xs) {
  return Dataset(PointSet(1, std::vector<double>(xs)), "test");
}

inline PointSet rows(std::size_t dim, std::vector<double> data) { return PointSet(dim, std::move(data)); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("otfit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// One dense layer from row-major weights.
inline DenseLayer layer(int out, int in, std::vector<float> w, std::vector<float> b) {
  DenseLayer L;
  L.weights.resize(out, in);
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) L.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
  }
  L.biases = Eigen::Map<const Eigen::VectorXf>(b.data(), out);
  return L;
}

}  // namespace otfit::testing
