#include "otfit/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "otfit/error.hpp"

namespace otfit {

std::string to_string(LatentKind k) {
  switch (k) {
    case LatentKind::GaussianStd: return "gaussian";
    case LatentKind::UniformBox: return "uniform";
    case LatentKind::Empirical: return "empirical";
  }
  return "?";
}

LatentKind parse_latent_kind(const std::string& text) {
  if (text == "gaussian") return LatentKind::GaussianStd;
  if (text == "uniform") return LatentKind::UniformBox;
  if (text == "empirical") return LatentKind::Empirical;
  throw InvalidInput("unknown latent kind '" + text + "' (expected gaussian, uniform or empirical)");
}

LatentSource LatentSource::gaussian(int dim) {
  LatentSource s;
  s.kind = LatentKind::GaussianStd;
  s.dim = dim;
  return s;
}

LatentSource LatentSource::uniform_box(int dim, double low, double high) {
  LatentSource s;
  s.kind = LatentKind::UniformBox;
  s.dim = dim;
  s.low = low;
  s.high = high;
  return s;
}

LatentSource LatentSource::empirical(PointSet support) {
  LatentSource s;
  s.kind = LatentKind::Empirical;
  s.dim = static_cast<int>(support.dim());
  s.support = std::move(support);
  return s;
}

void LatentSource::validate() const {
  if (dim < 1) throw InvalidInput("latent dimension must be >= 1");
  if (kind == LatentKind::UniformBox && !(low < high && std::isfinite(low) && std::isfinite(high))) {
    throw InvalidInput("uniform latent box needs finite low < high");
  }
  if (kind == LatentKind::Empirical) {
    if (support.size() == 0) throw InvalidInput("empirical latent source needs at least one point");
    if (static_cast<int>(support.dim()) != dim) throw InvalidInput("empirical support dimension mismatch");
  }
}

PointSet LatentSource::sample_points(Rng& rng, std::size_t n) const {
  const auto d = static_cast<std::size_t>(dim);
  PointSet z(n, d);
  switch (kind) {
    case LatentKind::GaussianStd: {
      std::normal_distribution<double> nd(0.0, 1.0);
      for (double& v : z.data()) v = nd(rng);
      break;
    }
    case LatentKind::UniformBox: {
      std::uniform_real_distribution<double> ud(low, high);
      for (double& v : z.data()) v = ud(rng);
      break;
    }
    case LatentKind::Empirical: {
      std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
      for (std::size_t j = 0; j < n; ++j) {
        auto row = support.row(pick(rng));
        std::copy(row.begin(), row.end(), z.row(j).begin());
      }
      break;
    }
  }
  return z;
}

Eigen::MatrixXf LatentSource::sample(Rng& rng, std::size_t n) const { return to_matrix(sample_points(rng, n)); }

PushforwardSampler::PushforwardSampler(LatentSource source, const Mlp* generator, double perturbation_sigma)
    : source_(std::move(source)), generator_(generator), perturbation_sigma_(perturbation_sigma) {
  source_.validate();
  if (!std::isfinite(perturbation_sigma_) || perturbation_sigma_ < 0.0) {
    throw InvalidInput("perturbation_sigma must be finite and >= 0");
  }
  if (generator_ != nullptr && generator_->input_dim() != source_.dim) {
    throw InvalidInput("generator input dimension does not match the latent source");
  }
}

std::size_t PushforwardSampler::output_dim() const noexcept {
  return generator_ != nullptr ? static_cast<std::size_t>(generator_->output_dim())
                               : static_cast<std::size_t>(source_.dim);
}

PointSet PushforwardSampler::push(const Eigen::MatrixXf& latents) const {
  if (generator_ == nullptr) return to_points(latents);
  return to_points(generator_->forward(latents));
}

PushforwardSampler::Batch PushforwardSampler::sample(Rng& rng, std::size_t n) const {
  Batch b;
  if (generator_ == nullptr) {
    // Without a generator x = z; keep the double-precision draw.
    b.outputs = source_.sample_points(rng, n);
    b.latents = to_matrix(b.outputs);
    return b;
  }
  b.latents = source_.sample(rng, n);
  b.outputs = to_points(generator_->forward(b.latents));
  return b;
}

}  // namespace otfit
