#include "szad/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "szad/error.hpp"
#include "szad/rng.hpp"
#include "szad/text.hpp"

namespace szad {

namespace {

using nn::Matrix;

enum SeedStream : std::uint64_t {
  kDiscriminatorInit = 1,
  kBatches = 2,
  kHoldout = 3,
  kProjections = 4,
  kEncoderInit = 100,
  kDecoderInit = 10000,
};

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> repeat_labels(std::span<const Matrix> blocks, std::span<const int> ids) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < blocks.size(); ++k) labels.insert(labels.end(), static_cast<std::size_t>(blocks[k].rows()), ids[k]);
  return labels;
}

Matrix stack(std::span<const Matrix> blocks) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  Matrix out(rows, blocks.front().cols());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return logits.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double shannon(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

void AdaptationConfig::validate() const {
  require(latent_dim >= 1, ErrorKind::kConfig, "latent_dim must be positive");
  require(encoder_hidden >= 1 && disc_hidden1 >= 1 && disc_hidden2 >= 1, ErrorKind::kConfig,
          "hidden widths must be positive");
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be positive");
  require(epochs >= 1, ErrorKind::kConfig, "epochs must be positive");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::kConfig, "learning_rate must be >= 0");
  require(std::isfinite(encoder_learning_rate) && std::isfinite(decoder_learning_rate) &&
              std::isfinite(discriminator_learning_rate),
          ErrorKind::kConfig, "learning rates must be finite");
  require(alpha >= 0.0, ErrorKind::kConfig, "alpha must be >= 0");
  require(lambda >= 0.0, ErrorKind::kConfig, "lambda must be >= 0");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorKind::kConfig,
          "holdout_fraction must lie in [0, 1)");
}

std::size_t AdaptationModel::subject_index(const std::string& subject_id) const {
  const auto it = std::find(subject_ids.begin(), subject_ids.end(), subject_id);
  require(it != subject_ids.end(), ErrorKind::kLookup, "no encoder for subject '" + subject_id + "'");
  return static_cast<std::size_t>(it - subject_ids.begin());
}

nn::LossEvaluation discriminator_objective(const nn::DenseNet& sd, std::span<const Matrix> latents,
                                           std::span<const int> subject_ids) {
  require(!latents.empty() && latents.size() == subject_ids.size(), ErrorKind::kShape,
          "one subject id per latent batch required");
  for (int id : subject_ids) {
    require(id >= 0 && id < sd.out_dim(), ErrorKind::kLabel,
            "subject id " + std::to_string(id) + " outside discriminator range " + std::to_string(sd.out_dim()));
  }
  const Matrix z = stack(latents);
  const auto labels = repeat_labels(latents, subject_ids);
  const auto cache = nn::forward(sd, z);
  const auto ce = nn::softmax_cross_entropy(cache.output, labels);
  nn::LossEvaluation out;
  out.loss = ce.loss;
  out.grads.push_back(nn::backward(sd, cache, ce.d_logits));
  out.kink_signature = cache.relu_signature(sd);
  return out;
}

nn::LossEvaluation encoder_objective(const nn::DenseNet& encoder, const nn::DenseNet& decoder,
                                     const nn::DenseNet& sd, const Matrix& x, int subject, double alpha,
                                     double lambda, nn::LossReport* report) {
  require(subject >= 0 && subject < sd.out_dim(), ErrorKind::kLabel,
          "subject id " + std::to_string(subject) + " outside discriminator range");
  require(encoder.out_dim() == decoder.in_dim() && encoder.out_dim() == sd.in_dim(), ErrorKind::kShape,
          "encoder, decoder and discriminator latent widths differ");
  const auto enc = nn::forward(encoder, x);
  const auto dec = nn::forward(decoder, enc.output);
  const auto disc = nn::forward(sd, enc.output);

  const std::vector<int> labels(static_cast<std::size_t>(x.rows()), subject);
  const auto ce = nn::softmax_cross_entropy(disc.output, labels);
  const auto rec = nn::recon_loss(x, dec.output, encoder, decoder, lambda);

  // The adversarial term is +mean log SD^i = -CE.
  Matrix d_latent_adv;
  nn::backward(sd, disc, -ce.d_logits, &d_latent_adv);
  Matrix d_latent_rec;
  auto dec_grads = nn::backward(decoder, dec, alpha * rec.d_reconstruction, &d_latent_rec);
  auto enc_grads = nn::backward(encoder, enc, d_latent_adv + d_latent_rec);
  nn::add_scaled(enc_grads, rec.encoder_l1, alpha);
  nn::add_scaled(dec_grads, rec.decoder_l1, alpha);

  nn::LossEvaluation out;
  out.loss = -ce.loss + alpha * rec.loss;
  out.grads.push_back(std::move(enc_grads));
  out.grads.push_back(std::move(dec_grads));
  std::uint64_t sig = enc.relu_signature(encoder) * 31 + dec.relu_signature(decoder);
  sig = sig * 31 + disc.relu_signature(sd);
  if (lambda != 0.0 && alpha != 0.0) sig = sig * 31 + nn::sign_signature(encoder) * 7 + nn::sign_signature(decoder);
  out.kink_signature = sig;
  if (report != nullptr) {
    report->adv = -ce.loss;
    report->rec = rec.mse;
    report->l1 = rec.l1;
    report->total = out.loss;
  }
  return out;
}

nn::LossReport discriminator_step(nn::DenseNet& sd, std::span<const Matrix> latents, std::span<const int> subject_ids,
                                  nn::AdamState& adam) {
  const auto eval = discriminator_objective(sd, latents, subject_ids);
  nn::adam_step(adam, sd, eval.grads.front());
  nn::LossReport r;
  r.adv = eval.loss;
  r.total = eval.loss;
  return r;
}

nn::LossReport encoder_decoder_step(nn::DenseNet& encoder, nn::DenseNet& decoder, const nn::DenseNet& sd,
                                    const Matrix& x, int subject, nn::AdamState& encoder_adam,
                                    nn::AdamState& decoder_adam, double alpha, double lambda) {
  nn::LossReport r;
  const auto eval = encoder_objective(encoder, decoder, sd, x, subject, alpha, lambda, &r);
  nn::adam_step(encoder_adam, encoder, eval.grads[0]);
  nn::adam_step(decoder_adam, decoder, eval.grads[1]);
  return r;
}

AdaptationModel train_adaptation(const std::vector<FeatureMatrix>& subjects, const AdaptationConfig& cfg) {
  cfg.validate();
  const std::size_t ns = subjects.size();
  require(ns >= 2, ErrorKind::kData, "adaptation needs at least 2 subjects");
  const Eigen::Index dim = subjects.front().dim();
  for (const auto& s : subjects) {
    require(s.dim() == dim, ErrorKind::kShape, "subject " + s.subject_id + " has a different feature dimension");
  }

  AdaptationModel model;
  model.config = cfg;

  // Fixed held-out split per subject; held-out rows never drive an update.
  std::vector<Matrix> train(ns);
  std::vector<Matrix> holdout(ns);
  std::vector<Matrix> all(ns);
  Rng split_rng(derive_seed(cfg.seed, kHoldout));
  for (std::size_t i = 0; i < ns; ++i) {
    const auto rows = static_cast<std::size_t>(subjects[i].rows());
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    split_rng.shuffle(perm.begin(), perm.end());
    const auto n_hold = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * cfg.holdout_fraction));
    require(rows - n_hold >= cfg.batch_size, ErrorKind::kData,
            "subject " + subjects[i].subject_id + " has " + std::to_string(rows - n_hold) +
                " training rows, fewer than batch_size " + std::to_string(cfg.batch_size));
    std::vector<std::size_t> hold_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
    std::sort(hold_rows.begin(), hold_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    const Matrix raw_train = gather_rows(subjects[i].values, train_rows);
    model.subject_ids.push_back(subjects[i].subject_id);
    model.normalizers.push_back(fit_normalizer(raw_train));
    train[i] = model.normalizers[i].apply(raw_train);
    holdout[i] = model.normalizers[i].apply(gather_rows(subjects[i].values, hold_rows));
    all[i] = model.normalizers[i].apply(subjects[i].values);
  }

  const auto latent = static_cast<Eigen::Index>(cfg.latent_dim);
  for (std::size_t i = 0; i < ns; ++i) {
    const std::size_t stream = cfg.shared_init ? 0 : i;
    Rng enc_rng(derive_seed(cfg.seed, kEncoderInit + stream));
    Rng dec_rng(derive_seed(cfg.seed, kDecoderInit + stream));
    model.encoders.push_back(nn::make_encoder(dim, static_cast<Eigen::Index>(cfg.encoder_hidden), latent, enc_rng));
    model.decoders.push_back(nn::make_decoder(latent, static_cast<Eigen::Index>(cfg.encoder_hidden), dim, dec_rng));
  }
  Rng sd_rng(derive_seed(cfg.seed, kDiscriminatorInit));
  model.discriminator = nn::make_discriminator(latent, static_cast<Eigen::Index>(cfg.disc_hidden1),
                                               static_cast<Eigen::Index>(cfg.disc_hidden2),
                                               static_cast<Eigen::Index>(ns), sd_rng);

  nn::AdamState sd_adam = nn::AdamState::for_net(model.discriminator, cfg.discriminator_rate());
  std::vector<nn::AdamState> enc_adam;
  std::vector<nn::AdamState> dec_adam;
  for (std::size_t i = 0; i < ns; ++i) {
    enc_adam.push_back(nn::AdamState::for_net(model.encoders[i], cfg.encoder_rate()));
    dec_adam.push_back(nn::AdamState::for_net(model.decoders[i], cfg.decoder_rate()));
  }

  std::vector<int> ids(ns);
  std::iota(ids.begin(), ids.end(), 0);
  const std::uint64_t projection_seed = derive_seed(cfg.seed, kProjections);

  const auto diagnostics = [&](EpochRecord& rec) {
    std::vector<Matrix> z_hold(ns);
    std::vector<int> hold_labels;
    for (std::size_t i = 0; i < ns; ++i) {
      z_hold[i] = nn::predict(model.encoders[i], holdout[i]);
      hold_labels.insert(hold_labels.end(), static_cast<std::size_t>(holdout[i].rows()), static_cast<int>(i));
    }
    const Matrix z_stack = stack(z_hold);
    rec.sd_holdout_acc = std::numeric_limits<double>::quiet_NaN();
    rec.sd_holdout_ce = std::numeric_limits<double>::quiet_NaN();
    rec.holdout_rec_loss = std::numeric_limits<double>::quiet_NaN();
    if (z_stack.rows() > 0) {
      const Matrix logits = nn::predict(model.discriminator, z_stack);
      rec.sd_holdout_acc = accuracy(logits, hold_labels);
      rec.sd_holdout_ce = nn::softmax_cross_entropy(logits, hold_labels).loss;
      double mse = 0.0;
      for (std::size_t i = 0; i < ns; ++i) {
        mse += (holdout[i] - nn::predict(model.decoders[i], z_hold[i])).rowwise().squaredNorm().sum();
      }
      rec.holdout_rec_loss = mse / static_cast<double>(z_stack.rows());
    }
    rec.jsd_estimate = std::numeric_limits<double>::quiet_NaN();
    if (cfg.track_divergence) {
      bool enough = true;
      std::vector<Matrix> z_all(ns);
      for (std::size_t i = 0; i < ns; ++i) {
        enough = enough && all[i].rows() >= 50;
        z_all[i] = nn::predict(model.encoders[i], all[i]);
      }
      if (enough) rec.jsd_estimate = estimate_latent_divergence(z_all, 8, 32, projection_seed);
    }
  };

  {
    EpochRecord initial;
    std::vector<Matrix> z(ns);
    double rec_sum = 0.0;
    double l1_sum = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      z[i] = nn::predict(model.encoders[i], train[i]);
      const auto r = nn::recon_loss(train[i], nn::predict(model.decoders[i], z[i]), model.encoders[i],
                                    model.decoders[i], cfg.lambda);
      rec_sum += r.mse;
      l1_sum += r.l1;
    }
    initial.adv_loss = discriminator_objective(model.discriminator, z, ids).loss;
    initial.rec_loss = rec_sum / static_cast<double>(ns);
    initial.l1 = l1_sum / static_cast<double>(ns);
    initial.total = -initial.adv_loss + cfg.alpha * (initial.rec_loss + initial.l1);
    diagnostics(initial);
    model.initial = initial;
  }

  std::size_t iterations = std::numeric_limits<std::size_t>::max();
  for (const auto& t : train) iterations = std::min(iterations, static_cast<std::size_t>(t.rows()) / cfg.batch_size);

  Rng batch_rng(derive_seed(cfg.seed, kBatches));
  std::vector<std::vector<std::size_t>> order(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    order[i].resize(static_cast<std::size_t>(train[i].rows()));
    std::iota(order[i].begin(), order[i].end(), std::size_t{0});
  }

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (auto& o : order) batch_rng.shuffle(o.begin(), o.end());
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t it = 0; it < iterations; ++it) {
      std::vector<Matrix> batch(ns);
      std::vector<Matrix> z(ns);
      for (std::size_t i = 0; i < ns; ++i) {
        const std::span<const std::size_t> rows(order[i].data() + it * cfg.batch_size, cfg.batch_size);
        batch[i] = gather_rows(train[i], rows);
        z[i] = nn::predict(model.encoders[i], batch[i]);
      }
      rec.adv_loss += discriminator_step(model.discriminator, z, ids, sd_adam).adv;
      for (std::size_t i = 0; i < ns; ++i) {
        const auto r = encoder_decoder_step(model.encoders[i], model.decoders[i], model.discriminator, batch[i],
                                            static_cast<int>(i), enc_adam[i], dec_adam[i], cfg.alpha, cfg.lambda);
        rec.rec_loss += r.rec;
        rec.l1 += r.l1;
        rec.total += r.total;
      }
    }
    const auto denom = static_cast<double>(iterations);
    rec.adv_loss /= denom;
    rec.rec_loss /= denom * static_cast<double>(ns);
    rec.l1 /= denom * static_cast<double>(ns);
    rec.total /= denom * static_cast<double>(ns);
    diagnostics(rec);
    model.history.push_back(rec);
  }
  return model;
}

Matrix encode(const AdaptationModel& model, std::size_t subject, const Eigen::MatrixXd& features) {
  require(subject < model.encoders.size(), ErrorKind::kLookup, "no encoder for subject index " + std::to_string(subject));
  return nn::predict(model.encoders[subject], model.normalizers[subject].apply(features));
}

Matrix encode(const AdaptationModel& model, const std::string& subject_id, const Eigen::MatrixXd& features) {
  return encode(model, model.subject_index(subject_id), features);
}

double estimate_latent_divergence(std::span<const Matrix> latents, std::size_t n_projections, std::size_t bins,
                                  std::uint64_t seed) {
  require(latents.size() >= 2, ErrorKind::kData, "divergence needs at least 2 subjects");
  require(n_projections >= 1 && bins >= 2, ErrorKind::kConfig, "need at least one projection and two bins");
  const Eigen::Index dim = latents.front().cols();
  for (const auto& z : latents) {
    require(z.rows() >= 50, ErrorKind::kData, "divergence needs at least 50 rows per subject");
    require(z.cols() == dim, ErrorKind::kShape, "latent widths differ");
  }
  Rng rng(seed);
  const std::size_t ns = latents.size();
  double total = 0.0;
  std::vector<std::vector<double>> hist(ns, std::vector<double>(bins));
  std::vector<double> mixture(bins);
  for (std::size_t p = 0; p < n_projections; ++p) {
    Eigen::VectorXd dir(dim);
    for (Eigen::Index k = 0; k < dim; ++k) dir[k] = rng.normal();
    dir.normalize();
    std::vector<Eigen::VectorXd> proj(ns);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < ns; ++i) {
      proj[i] = latents[i] * dir;
      lo = std::min(lo, proj[i].minCoeff());
      hi = std::max(hi, proj[i].maxCoeff());
    }
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    for (std::size_t i = 0; i < ns; ++i) {
      std::fill(hist[i].begin(), hist[i].end(), 1.0);
      for (Eigen::Index r = 0; r < proj[i].size(); ++r) {
        auto b = static_cast<std::size_t>((proj[i][r] - lo) / width);
        hist[i][std::min(b, bins - 1)] += 1.0;
      }
      const double norm = static_cast<double>(proj[i].size()) + static_cast<double>(bins);
      for (auto& v : hist[i]) v /= norm;
    }
    // Accumulate in a content order so the sums do not depend on subject order.
    std::vector<std::vector<double>> sorted = hist;
    std::sort(sorted.begin(), sorted.end());
    std::fill(mixture.begin(), mixture.end(), 0.0);
    double mean_entropy = 0.0;
    for (const auto& h : sorted) {
      for (std::size_t b = 0; b < bins; ++b) mixture[b] += h[b] / static_cast<double>(ns);
      mean_entropy += shannon(h) / static_cast<double>(ns);
    }
    total += std::max(0.0, shannon(mixture) - mean_entropy);
  }
  return total / static_cast<double>(n_projections);
}

double probe_subject_accuracy(std::span<const Matrix> samples, const ProbeConfig& cfg) {
  require(samples.size() >= 2, ErrorKind::kData, "probe needs at least 2 subjects");
  const std::size_t ns = samples.size();
  Rng rng(cfg.seed);
  std::vector<Matrix> train;
  std::vector<Matrix> test;
  for (std::size_t i = 0; i < ns; ++i) {
    const auto rows = static_cast<std::size_t>(samples[i].rows());
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(rows) * cfg.holdout_fraction)));
    require(rows > n_test, ErrorKind::kData, "probe needs at least 2 rows per subject");
    test.push_back(gather_rows(samples[i], std::span(perm).first(n_test)));
    train.push_back(gather_rows(samples[i], std::span(perm).subspan(n_test)));
  }
  const Normalizer norm = fit_normalizer(std::span<const Matrix>(train));
  for (auto& m : train) m = norm.apply(m);
  for (auto& m : test) m = norm.apply(m);

  std::vector<int> ids(ns);
  std::iota(ids.begin(), ids.end(), 0);
  const Matrix x = stack(train);
  const auto labels = repeat_labels(train, ids);
  auto net = nn::make_discriminator(x.cols(), static_cast<Eigen::Index>(cfg.hidden1),
                                    static_cast<Eigen::Index>(cfg.hidden2), static_cast<Eigen::Index>(ns), rng,
                                    nn::Role::kProbe);
  auto adam = nn::AdamState::for_net(net, cfg.learning_rate);
  std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      std::vector<int> batch_labels(len);
      for (std::size_t k = 0; k < len; ++k) batch_labels[k] = labels[rows[k]];
      const auto cache = nn::forward(net, gather_rows(x, rows));
      const auto ce = nn::softmax_cross_entropy(cache.output, batch_labels);
      nn::adam_step(adam, net, nn::backward(net, cache, ce.d_logits));
    }
  }
  return accuracy(nn::predict(net, stack(test)), repeat_labels(test, ids));
}

void write_history_csv(const AdaptationModel& model, std::ostream& out) {
  out << "epoch,adv_loss,rec_loss,sd_holdout_acc,jsd_estimate\n";
  const auto row = [&](const EpochRecord& r) {
    out << r.epoch << ',' << text::format_double(r.adv_loss) << ',' << text::format_double(r.rec_loss) << ','
        << text::format_double(r.sd_holdout_acc) << ',' << text::format_double(r.jsd_estimate) << '\n';
  };
  row(model.initial);
  for (const auto& r : model.history) row(r);
}

}  // namespace szad
