#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "otfit/dataset.hpp"
#include "otfit/rng.hpp"

namespace otfit {

/// Fully connected layer, y = W x + b. `weights` is out x in.
struct DenseLayer {
  Eigen::MatrixXf weights;
  Eigen::VectorXf biases;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.biases.size() == b.biases.size() && a.weights == b.weights && a.biases == b.biases;
  }
};

/// Activations cached by a batched forward pass for backward().
struct ForwardTape {
  std::vector<Eigen::MatrixXf> inputs;  ///< input to each layer (post-ReLU of the previous one)
};

class GradientBuffer;

/// Multilayer perceptron with ReLU hidden layers and a linear output layer.
/// Serves as the generator g and as the potential regressor. Parameters are
/// float32 so checkpoints round-trip bit-exactly.
class Mlp {
 public:
  Mlp() = default;
  /// Throws InvalidInput when layer shapes do not chain or a parameter is
  /// non-finite.
  explicit Mlp(std::vector<DenseLayer> layers, std::uint64_t version = 0);

  /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  /// `widths` = {input, hidden..., output}, at least two entries.
  static Mlp xavier(std::span<const int> widths, Rng& rng);

  int input_dim() const noexcept;
  int output_dim() const noexcept;
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;
  std::vector<int> widths() const;
  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

  bool all_finite() const noexcept;

  /// Batched forward; columns of `z` are samples. Throws InvalidInput on a
  /// shape mismatch or non-finite input.
  Eigen::MatrixXf forward(const Eigen::MatrixXf& z) const;
  Eigen::MatrixXf forward(const Eigen::MatrixXf& z, ForwardTape& tape) const;

  /// Accumulates d(sum_j output_j . upstream_j)/d(theta) into `into` and
  /// adds z.cols() to its sample count. ReLU'(0) = 0.
  void backward(const ForwardTape& tape, const Eigen::MatrixXf& upstream, GradientBuffer& into) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  void check_input(const Eigen::MatrixXf& z) const;

  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

using Generator = Mlp;

/// Parameter-shaped gradient accumulator.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const Mlp& shape_of);

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t samples() const noexcept { return samples_; }
  void add_samples(std::size_t n) noexcept { samples_ += n; }

  void clear();
  /// Elementwise sum; sample counts add.
  void merge(const GradientBuffer& other);
  bool all_finite() const noexcept;
  bool congruent_with(const Mlp& net) const noexcept;

 private:
  std::vector<DenseLayer> layers_;
  std::size_t samples_ = 0;
};

/// Single-sample forward pass.
Point forward(const Mlp& g, PointView z);

/// Gradient of forward(g, z) . upstream w.r.t. every parameter (count 1).
GradientBuffer backward(const Mlp& g, PointView z, std::span<const double> upstream);

/// Optional heavy-ball state for sgd_update.
struct MomentumState {
  double momentum = 0.0;
  std::vector<DenseLayer> velocity;
};

/// theta <- theta - eta * mean gradient, version + 1. Throws SolverAbort
/// when the gradient is non-finite and InvalidInput when eta <= 0 or the
/// buffer is empty.
void sgd_update(Mlp& g, const GradientBuffer& grads, double eta, MomentumState* state = nullptr,
                std::int64_t step = 0);
Mlp sgd_update(const Mlp& g, const GradientBuffer& grads, double eta);

/// Adam moment estimates.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t t = 0;
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
};

/// Adam step on the mean gradient, version + 1. Same errors as sgd_update.
void adam_update(Mlp& g, const GradientBuffer& grads, double eta, AdamState& state, std::int64_t step = 0);

/// Converts between column-major float batches and double point sets.
Eigen::MatrixXf to_matrix(const PointSet& points);
PointSet to_points(const Eigen::MatrixXf& columns);

// Serialisation: "OTSG", u32 format version, u64 parameter version, u32
// layer count, per layer u32 in / u32 out, then per layer the weights
// (row-major, out x in) and biases as little-endian float32.

inline constexpr std::uint32_t kMlpFormatVersion = 1;

void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);
void save_mlp(const std::filesystem::path& path, const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace otfit
