#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "szad/rng.hpp"

namespace szad::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1 };
enum class Role : std::uint32_t { kEncoder = 0, kDecoder = 1, kDiscriminator = 2, kProbe = 3 };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Same shapes as a net's layers; used for gradients and optimizer moments.
struct ParamBlock {
  Matrix weight;
  Vector bias;
};
using Gradients = std::vector<ParamBlock>;

class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(Role role, std::vector<DenseLayer> layers);

  /// Layer widths dims[0] -> dims[1] -> ...; uniform(+-sqrt(6/(in+out)))
  /// weights and zero biases.
  static DenseNet make(Role role, std::span<const Eigen::Index> dims,
                       std::span<const Activation> activations, Rng& rng);

  Role role() const { return role_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t param_count() const;

  /// Sum of |w| and |b| over every layer.
  double l1_norm() const;

  Gradients zero_gradients() const;

  friend bool operator==(const DenseNet& a, const DenseNet& b);

 private:
  Role role_ = Role::kEncoder;
  std::vector<DenseLayer> layers_;
};

/// encoder: in -> hidden relu -> latent linear
DenseNet make_encoder(Eigen::Index in, Eigen::Index hidden, Eigen::Index latent, Rng& rng);
/// decoder: latent -> hidden relu -> out linear
DenseNet make_decoder(Eigen::Index latent, Eigen::Index hidden, Eigen::Index out, Rng& rng);
/// discriminator: latent -> h1 relu -> h2 relu -> classes logits
DenseNet make_discriminator(Eigen::Index latent, Eigen::Index h1, Eigen::Index h2, Eigen::Index classes,
                            Rng& rng, Role role = Role::kDiscriminator);

/// Every layer's input, pre-activation and output for one batch (rows = samples).
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  Matrix output;

  /// Hash of the relu on/off pattern; changes whenever a unit crosses zero.
  std::uint64_t relu_signature(const DenseNet& net) const;
};

ForwardCache forward(const DenseNet& net, const Matrix& x);
/// Output only.
Matrix predict(const DenseNet& net, const Matrix& x);

/// Reverse-mode pass. `d_output` is dLoss/dOutput for the cached batch. When
/// `d_input` is non-null it receives dLoss/dInput.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& d_output,
                   Matrix* d_input = nullptr);

void add_scaled(Gradients& acc, const Gradients& g, double scale = 1.0);

/// Adds scale * sign(p) per parameter (subgradient 0 at p == 0).
void add_l1_subgradient(const DenseNet& net, double scale, Gradients& grads);

struct CrossEntropy {
  double loss = 0.0;
  Matrix d_logits;      // (softmax - onehot) / N
  Matrix probabilities;
};

CrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

Matrix softmax(const Matrix& logits);

struct ReconLoss {
  double loss = 0.0;     // mse + l1
  double mse = 0.0;      // (1/N) sum_n ||x_n - xhat_n||^2
  double l1 = 0.0;       // lambda * (|E|_1 + |D|_1)
  Matrix d_reconstruction;
  Gradients encoder_l1;  // lambda * sign(params)
  Gradients decoder_l1;
};

/// (1/N) sum_n ||X_n - Xhat_n||^2 + lambda (||E||_1 + ||D||_1).
ReconLoss recon_loss(const Matrix& x, const Matrix& reconstruction, const DenseNet& encoder,
                     const DenseNet& decoder, double lambda);

struct LossReport {
  double adv = 0.0;
  double rec = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

struct AdamState {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  Gradients m;
  Gradients v;

  static AdamState for_net(const DenseNet& net, double learning_rate);
};

/// One bias-corrected Adam update. Throws kNumeric on a non-finite gradient.
void adam_step(AdamState& state, DenseNet& net, const Gradients& grads);

/// Result of evaluating a scalar loss together with its analytic gradients.
struct LossEvaluation {
  double loss = 0.0;
  std::vector<Gradients> grads;    // one per checked net, same order
  std::uint64_t kink_signature = 0;  // relu patterns and L1 sign patterns
};

using LossFunction = std::function<LossEvaluation()>;

struct FiniteDiffOptions {
  double step = 1e-5;
  std::size_t max_params = 5000;
  std::uint64_t seed = 0;
};

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // perturbation crossed a relu or L1 kink
};

/// Central differences against the analytic gradient, per parameter:
/// |g_fd - g_bp| / max(1e-8, |g_fd| + |g_bp|). Parameters whose +-step
/// evaluations disagree in kink signature are excluded.
FiniteDiffReport finite_diff_check(std::span<DenseNet* const> nets, const LossFunction& loss,
                                   const FiniteDiffOptions& opts = {});

/// Hash of sign(p) for every parameter; part of an L1 kink signature.
std::uint64_t sign_signature(const DenseNet& net);

}  // namespace szad::nn
