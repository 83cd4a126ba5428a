#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "szad/features.hpp"
#include "szad/nn.hpp"

namespace szad {

struct AdaptationConfig {
  std::size_t latent_dim = 2048;
  std::size_t encoder_hidden = 512;
  std::size_t disc_hidden1 = 512;
  std::size_t disc_hidden2 = 128;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double learning_rate = 1e-5;
  // Per-network overrides; <= 0 falls back to learning_rate.
  double encoder_learning_rate = 0.0;
  double decoder_learning_rate = 0.0;
  double discriminator_learning_rate = 0.0;
  double alpha = 0.01;
  double lambda = 3e-5;
  double holdout_fraction = 0.2;
  bool track_divergence = true;
  bool shared_init = true;  // every subject's encoder/decoder starts from the same draw
  std::uint64_t seed = 0;

  double encoder_rate() const { return encoder_learning_rate > 0.0 ? encoder_learning_rate : learning_rate; }
  double decoder_rate() const { return decoder_learning_rate > 0.0 ? decoder_learning_rate : learning_rate; }
  double discriminator_rate() const {
    return discriminator_learning_rate > 0.0 ? discriminator_learning_rate : learning_rate;
  }

  void validate() const;
};

/// One row of the training history.
struct EpochRecord {
  std::size_t epoch = 0;
  double adv_loss = 0.0;  // discriminator cross-entropy
  double rec_loss = 0.0;  // mean squared reconstruction error per sample
  double l1 = 0.0;
  double total = 0.0;
  double sd_holdout_acc = 0.0;
  double sd_holdout_ce = 0.0;
  double holdout_rec_loss = 0.0;  // mean squared reconstruction error on held-out rows
  double jsd_estimate = 0.0;      // NaN when a subject has too few rows
};

struct AdaptationModel {
  AdaptationConfig config;
  std::vector<std::string> subject_ids;
  std::vector<nn::DenseNet> encoders;
  std::vector<nn::DenseNet> decoders;
  nn::DenseNet discriminator;
  std::vector<Normalizer> normalizers;
  EpochRecord initial;                // untrained state
  std::vector<EpochRecord> history;   // one entry per epoch

  std::size_t num_subjects() const { return subject_ids.size(); }
  /// Throws kLookup for an unknown id.
  std::size_t subject_index(const std::string& subject_id) const;
};

/// Mean -log SD^i(z) over all rows, with gradients for the discriminator.
nn::LossEvaluation discriminator_objective(const nn::DenseNet& sd, std::span<const nn::Matrix> latents,
                                           std::span<const int> subject_ids);

/// (1/N) sum_n [log SD^i(E(x_n)) + alpha (||x_n - D(E(x_n))||^2 + lambda(|E|_1 + |D|_1))]
/// with gradients for the encoder and decoder (in that order). The
/// discriminator is held fixed.
nn::LossEvaluation encoder_objective(const nn::DenseNet& encoder, const nn::DenseNet& decoder,
                                     const nn::DenseNet& sd, const nn::Matrix& x, int subject, double alpha,
                                     double lambda, nn::LossReport* report = nullptr);

/// One Adam step on the discriminator; latents[k] are samples from subject_ids[k].
nn::LossReport discriminator_step(nn::DenseNet& sd, std::span<const nn::Matrix> latents,
                                  std::span<const int> subject_ids, nn::AdamState& adam);

/// One Adam step on (encoder, decoder) of `subject` against a frozen discriminator.
nn::LossReport encoder_decoder_step(nn::DenseNet& encoder, nn::DenseNet& decoder, const nn::DenseNet& sd,
                                    const nn::Matrix& x, int subject, nn::AdamState& encoder_adam,
                                    nn::AdamState& decoder_adam, double alpha, double lambda);

/// Alternating minimax training over all subjects. Each iteration draws one
/// mini-batch per subject, updates the discriminator, then each subject's
/// encoder/decoder in index order.
AdaptationModel train_adaptation(const std::vector<FeatureMatrix>& subjects, const AdaptationConfig& cfg);

/// Subject's normalizer followed by its encoder.
nn::Matrix encode(const AdaptationModel& model, std::size_t subject, const Eigen::MatrixXd& features);
nn::Matrix encode(const AdaptationModel& model, const std::string& subject_id, const Eigen::MatrixXd& features);

/// Mean over random 1-D projections of the Jensen-Shannon divergence (nats)
/// between per-subject histograms on shared bins, add-one smoothed.
double estimate_latent_divergence(std::span<const nn::Matrix> latents, std::size_t n_projections = 8,
                                  std::size_t bins = 32, std::uint64_t seed = 0);

struct ProbeConfig {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Held-out accuracy of a freshly trained subject classifier on the given
/// per-subject samples (pooled z-scoring, stratified split).
double probe_subject_accuracy(std::span<const nn::Matrix> samples, const ProbeConfig& cfg = {});

/// Per-epoch CSV: epoch,adv_loss,rec_loss,sd_holdout_acc,jsd_estimate (epoch 0 = untrained)
void write_history_csv(const AdaptationModel& model, std::ostream& out);

}  // namespace szad
