#include "otfit/netcore.hpp"

#include <cmath>
#include <fstream>

#include "otfit/binary_io.hpp"
#include "otfit/error.hpp"

namespace otfit {

namespace {

constexpr char kMlpMagic[4] = {'O', 'T', 'S', 'G'};

bool finite(const Eigen::MatrixXf& m) { return m.allFinite(); }

}  // namespace

Mlp::Mlp(std::vector<DenseLayer> layers, std::uint64_t version)
    : layers_(std::move(layers)), version_(version) {
  if (layers_.empty()) throw InvalidInput("Mlp: needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.weights.rows() == 0 || L.weights.cols() == 0) throw InvalidInput("Mlp: empty layer");
    if (L.biases.size() != L.weights.rows()) throw InvalidInput("Mlp: bias length != layer width");
    if (l > 0 && L.weights.cols() != layers_[l - 1].weights.rows()) {
      throw InvalidInput("Mlp: layer shapes do not chain");
    }
  }
  if (!all_finite()) throw InvalidInput("Mlp: non-finite parameter");
}

Mlp Mlp::xavier(std::span<const int> widths, Rng& rng) {
  if (widths.size() < 2) throw InvalidInput("Mlp::xavier: need input and output widths");
  for (int w : widths) {
    if (w < 1) throw InvalidInput("Mlp::xavier: widths must be positive");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXf(out, in), Eigen::VectorXf::Zero(out)};
    // Fill row-major so the draw order matches the on-disk layout.
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weights(r, c) = static_cast<float>(u(rng));
    }
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const noexcept {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int Mlp::output_dim() const noexcept {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weights.size() + L.biases.size();
  return n;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& L : layers_) w.push_back(static_cast<int>(L.weights.rows()));
  return w;
}

bool Mlp::all_finite() const noexcept {
  for (const auto& L : layers_) {
    if (!L.weights.allFinite() || !L.biases.allFinite()) return false;
  }
  return true;
}

void Mlp::check_input(const Eigen::MatrixXf& z) const {
  if (layers_.empty()) throw InvalidInput("Mlp: forward on an empty network");
  if (z.rows() != input_dim()) throw InvalidInput("Mlp: input dimension mismatch");
  if (!finite(z)) throw InvalidInput("Mlp: non-finite input");
  if (!all_finite()) throw InvalidInput("Mlp: non-finite parameter");
}

Eigen::MatrixXf Mlp::forward(const Eigen::MatrixXf& z) const {
  check_input(z);
  Eigen::MatrixXf x = z;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXf a = layers_[l].weights * x;
    a.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size()) a = a.cwiseMax(0.0f);
    x = std::move(a);
  }
  return x;
}

Eigen::MatrixXf Mlp::forward(const Eigen::MatrixXf& z, ForwardTape& tape) const {
  check_input(z);
  tape.inputs.resize(layers_.size());
  tape.inputs[0] = z;
  Eigen::MatrixXf out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXf a = layers_[l].weights * tape.inputs[l];
    a.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size()) {
      tape.inputs[l + 1] = a.cwiseMax(0.0f);
    } else {
      out = std::move(a);
    }
  }
  return out;
}

void Mlp::backward(const ForwardTape& tape, const Eigen::MatrixXf& upstream, GradientBuffer& into) const {
  if (tape.inputs.size() != layers_.size()) throw InvalidInput("Mlp::backward: tape does not match network");
  const auto batch = tape.inputs.front().cols();
  if (upstream.rows() != output_dim() || upstream.cols() != batch) {
    throw InvalidInput("Mlp::backward: upstream shape mismatch");
  }
  if (!into.congruent_with(*this)) throw InvalidInput("Mlp::backward: gradient buffer shape mismatch");
  Eigen::MatrixXf delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto& g = into.layers()[l];
    g.weights.noalias() += delta * tape.inputs[l].transpose();
    g.biases.noalias() += delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXf back = layers_[l].weights.transpose() * delta;
      delta = (tape.inputs[l].array() > 0.0f).select(back, 0.0f);
    }
  }
  into.add_samples(static_cast<std::size_t>(batch));
}

GradientBuffer::GradientBuffer(const Mlp& shape_of) {
  for (const auto& L : shape_of.layers()) {
    layers_.push_back({Eigen::MatrixXf::Zero(L.weights.rows(), L.weights.cols()),
                       Eigen::VectorXf::Zero(L.biases.size())});
  }
}

void GradientBuffer::clear() {
  for (auto& L : layers_) {
    L.weights.setZero();
    L.biases.setZero();
  }
  samples_ = 0;
}

void GradientBuffer::merge(const GradientBuffer& other) {
  if (other.layers_.size() != layers_.size()) throw InvalidInput("GradientBuffer::merge: shape mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (other.layers_[l].weights.rows() != layers_[l].weights.rows() ||
        other.layers_[l].weights.cols() != layers_[l].weights.cols()) {
      throw InvalidInput("GradientBuffer::merge: shape mismatch");
    }
    layers_[l].weights += other.layers_[l].weights;
    layers_[l].biases += other.layers_[l].biases;
  }
  samples_ += other.samples_;
}

bool GradientBuffer::all_finite() const noexcept {
  for (const auto& L : layers_) {
    if (!L.weights.allFinite() || !L.biases.allFinite()) return false;
  }
  return true;
}

bool GradientBuffer::congruent_with(const Mlp& net) const noexcept {
  if (layers_.size() != net.layers().size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = net.layers()[l];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
        a.biases.size() != b.biases.size()) {
      return false;
    }
  }
  return true;
}

Point forward(const Mlp& g, PointView z) {
  Eigen::MatrixXf zin(static_cast<Eigen::Index>(z.size()), 1);
  for (std::size_t k = 0; k < z.size(); ++k) zin(static_cast<Eigen::Index>(k), 0) = static_cast<float>(z[k]);
  if (static_cast<int>(z.size()) != g.input_dim()) throw InvalidInput("forward: input dimension mismatch");
  for (double v : z) {
    if (!std::isfinite(v)) throw InvalidInput("forward: non-finite input");
  }
  Eigen::MatrixXf out = g.forward(zin);
  Point p(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index k = 0; k < out.rows(); ++k) p[static_cast<std::size_t>(k)] = out(k, 0);
  return p;
}

GradientBuffer backward(const Mlp& g, PointView z, std::span<const double> upstream) {
  if (static_cast<int>(upstream.size()) != g.output_dim()) throw InvalidInput("backward: upstream dimension mismatch");
  if (static_cast<int>(z.size()) != g.input_dim()) throw InvalidInput("backward: input dimension mismatch");
  Eigen::MatrixXf zin(g.input_dim(), 1), up(g.output_dim(), 1);
  for (std::size_t k = 0; k < z.size(); ++k) zin(static_cast<Eigen::Index>(k), 0) = static_cast<float>(z[k]);
  for (std::size_t k = 0; k < upstream.size(); ++k) up(static_cast<Eigen::Index>(k), 0) = static_cast<float>(upstream[k]);
  ForwardTape tape;
  g.forward(zin, tape);
  GradientBuffer grads(g);
  g.backward(tape, up, grads);
  return grads;
}

void sgd_update(Mlp& g, const GradientBuffer& grads, double eta, MomentumState* state, std::int64_t step) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("sgd_update: learning rate must be > 0");
  if (grads.samples() == 0) throw InvalidInput("sgd_update: empty gradient buffer");
  if (!grads.congruent_with(g)) throw InvalidInput("sgd_update: gradient shape mismatch");
  if (!grads.all_finite()) throw SolverAbort("sgd_update: non-finite gradient", step);
  const float scale = static_cast<float>(eta / static_cast<double>(grads.samples()));
  auto& layers = g.mutable_layers();
  if (state != nullptr && state->momentum > 0.0) {
    if (state->velocity.size() != layers.size()) {
      state->velocity.clear();
      for (const auto& L : layers) {
        state->velocity.push_back({Eigen::MatrixXf::Zero(L.weights.rows(), L.weights.cols()),
                                   Eigen::VectorXf::Zero(L.biases.size())});
      }
    }
    const float mu = static_cast<float>(state->momentum);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& v = state->velocity[l];
      v.weights = mu * v.weights + scale * grads.layers()[l].weights;
      v.biases = mu * v.biases + scale * grads.layers()[l].biases;
      layers[l].weights -= v.weights;
      layers[l].biases -= v.biases;
    }
  } else {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weights -= scale * grads.layers()[l].weights;
      layers[l].biases -= scale * grads.layers()[l].biases;
    }
  }
  if (!g.all_finite()) throw SolverAbort("sgd_update: parameters became non-finite", step);
  g.set_version(g.version() + 1);
}

Mlp sgd_update(const Mlp& g, const GradientBuffer& grads, double eta) {
  Mlp out = g;
  sgd_update(out, grads, eta);
  return out;
}

void adam_update(Mlp& g, const GradientBuffer& grads, double eta, AdamState& state, std::int64_t step) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("adam_update: learning rate must be > 0");
  if (grads.samples() == 0) throw InvalidInput("adam_update: empty gradient buffer");
  if (!grads.congruent_with(g)) throw InvalidInput("adam_update: gradient shape mismatch");
  if (!grads.all_finite()) throw SolverAbort("adam_update: non-finite gradient", step);
  auto& layers = g.mutable_layers();
  if (state.m.size() != layers.size()) {
    state.m.clear();
    state.v.clear();
    state.t = 0;
    for (const auto& L : layers) {
      DenseLayer zero{Eigen::MatrixXf::Zero(L.weights.rows(), L.weights.cols()), Eigen::VectorXf::Zero(L.biases.size())};
      state.m.push_back(zero);
      state.v.push_back(std::move(zero));
    }
  }
  ++state.t;
  const float inv_n = 1.0f / static_cast<float>(grads.samples());
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const float lr = static_cast<float>(eta * std::sqrt(c2) / c1);
  const float eps = static_cast<float>(state.epsilon);
  auto apply = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = b1 * m + (1.0f - b1) * (grad * inv_n);
    v = b2 * v + ((1.0f - b2) * inv_n * inv_n) * grad.cwiseAbs2();
    param.array() -= lr * m.array() / (v.array().sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    apply(layers[l].weights, state.m[l].weights, state.v[l].weights, grads.layers()[l].weights);
    apply(layers[l].biases, state.m[l].biases, state.v[l].biases, grads.layers()[l].biases);
  }
  if (!g.all_finite()) throw SolverAbort("adam_update: parameters became non-finite", step);
  g.set_version(g.version() + 1);
}

Eigen::MatrixXf to_matrix(const PointSet& points) {
  Eigen::MatrixXf m(static_cast<Eigen::Index>(points.dim()), static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    auto row = points.row(j);
    for (std::size_t k = 0; k < points.dim(); ++k) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = static_cast<float>(row[k]);
    }
  }
  return m;
}

PointSet to_points(const Eigen::MatrixXf& columns) {
  PointSet out(static_cast<std::size_t>(columns.cols()), static_cast<std::size_t>(columns.rows()));
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    auto row = out.row(static_cast<std::size_t>(j));
    for (Eigen::Index k = 0; k < columns.rows(); ++k) row[static_cast<std::size_t>(k)] = columns(k, j);
  }
  return out;
}

void write_mlp(std::ostream& os, const Mlp& net) {
  io::write_bytes(os, std::string_view(kMlpMagic, 4));
  io::write_u32(os, kMlpFormatVersion);
  io::write_u64(os, net.version());
  io::write_u32(os, static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& L : net.layers()) {
    io::write_u32(os, static_cast<std::uint32_t>(L.weights.cols()));
    io::write_u32(os, static_cast<std::uint32_t>(L.weights.rows()));
  }
  for (const auto& L : net.layers()) {
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) io::write_f32(os, L.weights(r, c));
    }
    for (Eigen::Index r = 0; r < L.biases.size(); ++r) io::write_f32(os, L.biases(r));
  }
}

Mlp read_mlp(std::istream& is) {
  char magic[4];
  io::read_bytes(is, magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kMlpMagic, 4)) {
    throw FormatError(FormatErrorKind::BadMagic, "not a generator checkpoint (bad magic)");
  }
  const auto fmt = io::read_u32(is);
  if (fmt != kMlpFormatVersion) {
    throw FormatError(FormatErrorKind::VersionMismatch,
                      "unsupported generator format version " + std::to_string(fmt));
  }
  const auto version = io::read_u64(is);
  const auto count = io::read_u32(is);
  if (count == 0 || count > 1024) throw FormatError(FormatErrorKind::Malformed, "implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(count);
  for (auto& [in, out] : dims) {
    in = io::read_u32(is);
    out = io::read_u32(is);
    if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20)) {
      throw FormatError(FormatErrorKind::Malformed, "implausible layer dimensions");
    }
  }
  std::vector<DenseLayer> layers;
  layers.reserve(count);
  for (const auto& [in, out] : dims) {
    DenseLayer L{Eigen::MatrixXf(out, in), Eigen::VectorXf(out)};
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) L.weights(r, c) = io::read_f32(is);
    }
    for (Eigen::Index r = 0; r < L.biases.size(); ++r) L.biases(r) = io::read_f32(is);
    layers.push_back(std::move(L));
  }
  try {
    return Mlp(std::move(layers), version);
  } catch (const InvalidInput& e) {
    throw FormatError(FormatErrorKind::Malformed, e.what());
  }
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_mlp(os, net);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  return read_mlp(is);
}

}  // namespace otfit
