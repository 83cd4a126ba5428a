#include "szad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "szad/error.hpp"

namespace szad::nn {

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return h;
}

void apply_activation(Activation a, Matrix& z) {
  if (a == Activation::kRelu) z = z.cwiseMax(0.0);
}

}  // namespace

DenseNet::DenseNet(Role role, std::vector<DenseLayer> layers) : role_(role), layers_(std::move(layers)) {
  require(!layers_.empty(), ErrorKind::kShape, "network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    require(layer.bias.size() == layer.weight.rows(), ErrorKind::kShape,
            "layer " + std::to_string(l) + ": bias length differs from output width");
    if (l > 0) {
      require(layer.in_dim() == layers_[l - 1].out_dim(), ErrorKind::kShape,
              "layer " + std::to_string(l) + ": input width does not chain");
    }
  }
}

DenseNet DenseNet::make(Role role, std::span<const Eigen::Index> dims, std::span<const Activation> activations,
                        Rng& rng) {
  require(dims.size() >= 2 && activations.size() == dims.size() - 1, ErrorKind::kShape,
          "need one activation per layer");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index in = dims[l];
    const Eigen::Index out = dims[l + 1];
    require(in > 0 && out > 0, ErrorKind::kShape, "layer widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = activations[l];
    layers.push_back(std::move(layer));
  }
  return DenseNet(role, std::move(layers));
}

Eigen::Index DenseNet::in_dim() const { return layers_.front().in_dim(); }
Eigen::Index DenseNet::out_dim() const { return layers_.back().out_dim(); }

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double DenseNet::l1_norm() const {
  double acc = 0.0;
  for (const auto& l : layers_) acc += l.weight.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
  return acc;
}

Gradients DenseNet::zero_gradients() const {
  Gradients g(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    g[l].weight = Matrix::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
    g[l].bias = Vector::Zero(layers_[l].bias.size());
  }
  return g;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
  if (a.role_ != b.role_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& x = a.layers_[l];
    const auto& y = b.layers_[l];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols()) {
      return false;
    }
    if (x.weight != y.weight || x.bias != y.bias) return false;
  }
  return true;
}

DenseNet make_encoder(Eigen::Index in, Eigen::Index hidden, Eigen::Index latent, Rng& rng) {
  const Eigen::Index dims[] = {in, hidden, latent};
  const Activation acts[] = {Activation::kRelu, Activation::kIdentity};
  return DenseNet::make(Role::kEncoder, dims, acts, rng);
}

DenseNet make_decoder(Eigen::Index latent, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
  const Eigen::Index dims[] = {latent, hidden, out};
  const Activation acts[] = {Activation::kRelu, Activation::kIdentity};
  return DenseNet::make(Role::kDecoder, dims, acts, rng);
}

DenseNet make_discriminator(Eigen::Index latent, Eigen::Index h1, Eigen::Index h2, Eigen::Index classes, Rng& rng,
                            Role role) {
  const Eigen::Index dims[] = {latent, h1, h2, classes};
  const Activation acts[] = {Activation::kRelu, Activation::kRelu, Activation::kIdentity};
  return DenseNet::make(role, dims, acts, rng);
}

std::uint64_t ForwardCache::relu_signature(const DenseNet& net) const {
  std::uint64_t h = 0x1234567ULL;
  for (std::size_t l = 0; l < pre.size(); ++l) {
    if (net.layers()[l].activation != Activation::kRelu) continue;
    const Matrix& z = pre[l];
    for (Eigen::Index i = 0; i < z.size(); ++i) h = mix(h, z.data()[i] > 0.0 ? 1u : 0u);
  }
  return h;
}

ForwardCache forward(const DenseNet& net, const Matrix& x) {
  require(x.cols() == net.in_dim(), ErrorKind::kShape,
          "input has " + std::to_string(x.cols()) + " columns, network expects " + std::to_string(net.in_dim()));
  ForwardCache cache;
  const auto& layers = net.layers();
  cache.inputs.reserve(layers.size());
  cache.pre.reserve(layers.size());
  Matrix a = x;
  for (const auto& layer : layers) {
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    cache.inputs.push_back(std::move(a));
    a = z;
    apply_activation(layer.activation, a);
    cache.pre.push_back(std::move(z));
  }
  cache.output = std::move(a);
  return cache;
}

Matrix predict(const DenseNet& net, const Matrix& x) {
  require(x.cols() == net.in_dim(), ErrorKind::kShape,
          "input has " + std::to_string(x.cols()) + " columns, network expects " + std::to_string(net.in_dim()));
  Matrix a = x;
  for (const auto& layer : net.layers()) {
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    apply_activation(layer.activation, z);
    a = std::move(z);
  }
  return a;
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& d_output, Matrix* d_input) {
  const auto& layers = net.layers();
  require(d_output.rows() == cache.output.rows() && d_output.cols() == cache.output.cols(), ErrorKind::kShape,
          "output gradient shape does not match forward pass");
  Gradients grads(layers.size());
  Matrix delta = d_output;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    if (layer.activation == Activation::kRelu) {
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    grads[l].weight = delta.transpose() * cache.inputs[l];
    grads[l].bias = delta.colwise().sum().transpose();
    if (l > 0 || d_input != nullptr) {
      Matrix next = delta * layer.weight;
      delta = std::move(next);
    }
  }
  if (d_input != nullptr) *d_input = std::move(delta);
  return grads;
}

void add_scaled(Gradients& acc, const Gradients& g, double scale) {
  require(acc.size() == g.size(), ErrorKind::kShape, "gradient layer counts differ");
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += scale * g[l].weight;
    acc[l].bias += scale * g[l].bias;
  }
}

void add_l1_subgradient(const DenseNet& net, double scale, Gradients& grads) {
  const auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  const auto& layers = net.layers();
  require(grads.size() == layers.size(), ErrorKind::kShape, "gradient layer count differs from net");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    grads[l].weight += scale * layers[l].weight.unaryExpr(sign);
    grads[l].bias += scale * layers[l].bias.unaryExpr(sign);
  }
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

CrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  require(k >= 2, ErrorKind::kShape, "cross-entropy needs at least 2 classes");
  require(static_cast<std::size_t>(n) == labels.size(), ErrorKind::kShape, "one label per logit row required");
  require(n >= 1, ErrorKind::kShape, "empty batch");
  CrossEntropy out;
  const Vector row_max = logits.rowwise().maxCoeff();
  const Matrix shifted = logits.colwise() - row_max;
  const Vector log_norm = shifted.array().exp().rowwise().sum().log();
  out.probabilities = (shifted.colwise() - log_norm).array().exp();
  out.d_logits = out.probabilities;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < k, ErrorKind::kLabel,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    acc += log_norm[i] - shifted(i, y);
    out.d_logits(i, y) -= 1.0;
  }
  out.loss = acc / static_cast<double>(n);
  out.d_logits /= static_cast<double>(n);
  return out;
}

ReconLoss recon_loss(const Matrix& x, const Matrix& reconstruction, const DenseNet& encoder, const DenseNet& decoder,
                     double lambda) {
  require(x.rows() == reconstruction.rows() && x.cols() == reconstruction.cols(), ErrorKind::kShape,
          "input and reconstruction shapes differ");
  require(x.rows() >= 1, ErrorKind::kShape, "empty batch");
  const double n = static_cast<double>(x.rows());
  ReconLoss out;
  const Matrix diff = x - reconstruction;
  out.mse = diff.squaredNorm() / n;
  out.l1 = lambda * (encoder.l1_norm() + decoder.l1_norm());
  out.loss = out.mse + out.l1;
  out.d_reconstruction = (-2.0 / n) * diff;
  out.encoder_l1 = encoder.zero_gradients();
  out.decoder_l1 = decoder.zero_gradients();
  if (lambda != 0.0) {
    add_l1_subgradient(encoder, lambda, out.encoder_l1);
    add_l1_subgradient(decoder, lambda, out.decoder_l1);
  }
  return out;
}

AdamState AdamState::for_net(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = net.zero_gradients();
  s.v = net.zero_gradients();
  return s;
}

void adam_step(AdamState& state, DenseNet& net, const Gradients& grads) {
  auto& layers = net.layers();
  require(grads.size() == layers.size() && state.m.size() == layers.size(), ErrorKind::kShape,
          "optimizer state does not mirror the network");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    require(grads[l].weight.allFinite() && grads[l].bias.allFinite(), ErrorKind::kNumeric,
            "non-finite gradient in layer " + std::to_string(l));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double lr = state.learning_rate;
  const double eps = state.epsilon;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    update(layers[l].weight, state.m[l].weight, state.v[l].weight, grads[l].weight);
    update(layers[l].bias, state.m[l].bias, state.v[l].bias, grads[l].bias);
  }
}

std::uint64_t sign_signature(const DenseNet& net) {
  std::uint64_t h = 0xABCDEFULL;
  const auto code = [](double v) -> std::uint64_t { return v > 0.0 ? 2u : (v < 0.0 ? 1u : 0u); };
  for (const auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) h = mix(h, code(l.weight.data()[i]));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) h = mix(h, code(l.bias.data()[i]));
  }
  return h;
}

FiniteDiffReport finite_diff_check(std::span<DenseNet* const> nets, const LossFunction& loss,
                                   const FiniteDiffOptions& opts) {
  const LossEvaluation base = loss();
  require(base.grads.size() == nets.size(), ErrorKind::kShape, "loss must return one gradient set per net");

  struct Slot {
    std::size_t net;
    std::size_t layer;
    bool bias;
    Eigen::Index index;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const auto& layers = nets[k]->layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (Eigen::Index i = 0; i < layers[l].weight.size(); ++i) slots.push_back({k, l, false, i});
      for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) slots.push_back({k, l, true, i});
    }
  }
  if (slots.size() > opts.max_params) {
    Rng rng(opts.seed);
    rng.shuffle(slots.begin(), slots.end());
    slots.resize(opts.max_params);
  }

  FiniteDiffReport report;
  for (const Slot& s : slots) {
    auto& layer = nets[s.net]->layers()[s.layer];
    double& p = s.bias ? layer.bias.data()[s.index] : layer.weight.data()[s.index];
    const auto& g = base.grads[s.net][s.layer];
    const double analytic = s.bias ? g.bias.data()[s.index] : g.weight.data()[s.index];
    const double saved = p;
    p = saved + opts.step;
    const LossEvaluation plus = loss();
    p = saved - opts.step;
    const LossEvaluation minus = loss();
    p = saved;
    if (plus.kink_signature != minus.kink_signature) {
      ++report.excluded;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
    const double rel = std::abs(numeric - analytic) / std::max(1e-8, std::abs(numeric) + std::abs(analytic));
    report.max_relative_error = std::max(report.max_relative_error, rel);
    ++report.checked;
  }
  return report;
}

}  // namespace szad::nn
