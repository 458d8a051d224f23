#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "otfit/dataset.hpp"
#include "otfit/netcore.hpp"
#include "otfit/rng.hpp"

namespace otfit {

enum class LatentKind {
  GaussianStd,  ///< N(0, I)
  UniformBox,   ///< uniform on [low, high]^d
  Empirical,    ///< uniform draw from a fixed point set
};

std::string to_string(LatentKind k);
LatentKind parse_latent_kind(const std::string& text);

/// The simple source distribution mu.
struct LatentSource {
  LatentKind kind = LatentKind::GaussianStd;
  int dim = 1;
  double low = -1.0;
  double high = 1.0;
  PointSet support;  ///< Empirical only

  static LatentSource gaussian(int dim);
  static LatentSource uniform_box(int dim, double low, double high);
  static LatentSource empirical(PointSet support);

  /// Throws InvalidInput on an inconsistent description.
  void validate() const;
  /// n draws as rows.
  PointSet sample_points(Rng& rng, std::size_t n) const;
  /// Same draws as sample_points, one per column in float.
  Eigen::MatrixXf sample(Rng& rng, std::size_t n) const;
};

/// Draws x ~ g#mu: latent z ~ mu, then x = g(z) (or x = z without a
/// generator). Holds a non-owning pointer to the generator.
class PushforwardSampler {
 public:
  PushforwardSampler(LatentSource source, const Mlp* generator = nullptr,
                     double perturbation_sigma = 0.0);

  struct Batch {
    Eigen::MatrixXf latents;  ///< d_z x n
    PointSet outputs;         ///< n x D
  };

  Batch sample(Rng& rng, std::size_t n) const;
  /// Outputs only.
  PointSet sample_points(Rng& rng, std::size_t n) const { return sample(rng, n).outputs; }

  /// Pushes given latents through the generator.
  PointSet push(const Eigen::MatrixXf& latents) const;

  std::size_t output_dim() const noexcept;
  const LatentSource& source() const noexcept { return source_; }
  const Mlp* generator() const noexcept { return generator_; }
  double perturbation_sigma() const noexcept { return perturbation_sigma_; }

 private:
  LatentSource source_;
  const Mlp* generator_;
  double perturbation_sigma_;
};

}  // namespace otfit
