#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../oracles.hpp"
#include "szad/adaptation.hpp"
#include "szad/error.hpp"
#include "szad/model_io.hpp"

using namespace szad;
using nn::Matrix;

namespace {

Matrix rows_of(const Matrix& m, Eigen::Index begin, Eigen::Index count) { return m.middleRows(begin, count); }

double sd_accuracy(const nn::DenseNet& sd, std::span<const Matrix> latents) {
  std::size_t correct = 0, total = 0;
  for (std::size_t s = 0; s < latents.size(); ++s) {
    const Matrix logits = nn::predict(sd, latents[s]);
    for (Eigen::Index i = 0; i < logits.rows(); ++i, ++total) {
      Eigen::Index best = 0;
      logits.row(i).maxCoeff(&best);
      if (best == static_cast<Eigen::Index>(s)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Trains a fresh discriminator on the first 80% of each subject's rows and
/// scores it on the rest.
double train_sd(const std::vector<Matrix>& latents, std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  auto sd = nn::make_discriminator(latents[0].cols(), 32, 16, static_cast<Eigen::Index>(latents.size()), rng);
  auto adam = nn::AdamState::for_net(sd, 1e-3);
  const Eigen::Index n_train = latents[0].rows() * 4 / 5;
  std::vector<int> ids(latents.size());
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<Matrix> batch;
    for (const auto& z : latents) {
      Matrix b(32, z.cols());
      for (Eigen::Index r = 0; r < 32; ++r) b.row(r) = z.row(static_cast<Eigen::Index>(rng.index(n_train)));
      batch.push_back(b);
    }
    discriminator_step(sd, batch, ids, adam);
  }
  std::vector<Matrix> held;
  for (const auto& z : latents) held.push_back(rows_of(z, n_train, z.rows() - n_train));
  return sd_accuracy(sd, held);
}

FeatureMatrix gaussian_subject(const std::string& id, Rng& rng, Eigen::Index rows, Eigen::Index dim, double shift) {
  FeatureMatrix m{id, oracle::gaussian(rng, rows, dim, shift), {}};
  for (Eigen::Index r = 0; r < rows; ++r) m.labels.push_back(r % 4 == 0 ? 1 : 0);
  return m;
}

AdaptationConfig tiny_config() {
  AdaptationConfig cfg;
  cfg.latent_dim = 8;
  cfg.encoder_hidden = 16;
  cfg.disc_hidden1 = 16;
  cfg.disc_hidden2 = 8;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("discriminator on identical latents stays at chance") {
  Rng rng(1);
  const Matrix z = oracle::gaussian(rng, 200, 6);
  CHECK(std::abs(train_sd({z, z}, 200, 2) - 0.5) <= 0.05);
}

TEST_CASE("discriminator separates separable latents") {
  Rng rng(2);
  const Matrix a = oracle::gaussian(rng, 200, 6, -2.0);
  const Matrix b = oracle::gaussian(rng, 200, 6, 2.0);
  CHECK(train_sd({a, b}, 300, 3) > 0.95);
}

TEST_CASE("discriminator step edge cases") {
  Rng rng(3);
  auto sd = nn::make_discriminator(4, 8, 4, 2, rng);
  const std::vector<Matrix> batch = {oracle::gaussian(rng, 5, 4), oracle::gaussian(rng, 5, 4)};
  const auto before = sd;
  auto frozen = nn::AdamState::for_net(sd, 0.0);
  discriminator_step(sd, batch, std::vector<int>{0, 1}, frozen);
  CHECK(sd == before);
  auto adam = nn::AdamState::for_net(sd, 1e-3);
  CHECK_THROWS_AS(discriminator_step(sd, batch, std::vector<int>{0, 2}, adam), Error);
}

TEST_CASE("encoder step against a uniform discriminator with alpha 0") {
  Rng rng(4);
  auto enc = nn::make_encoder(5, 8, 4, rng);
  auto dec = nn::make_decoder(4, 8, 5, rng);
  auto sd = nn::make_discriminator(4, 8, 4, 3, rng);
  sd.layers().back().weight.setZero();
  sd.layers().back().bias.setZero();
  const auto e0 = enc;
  const auto d0 = dec;
  auto ea = nn::AdamState::for_net(enc, 1e-3);
  auto da = nn::AdamState::for_net(dec, 1e-3);
  const Matrix x = oracle::gaussian(rng, 16, 5);
  encoder_decoder_step(enc, dec, sd, x, 1, ea, da, 0.0, 0.0);
  for (std::size_t l = 0; l < enc.layers().size(); ++l) {
    CHECK((enc.layers()[l].weight - e0.layers()[l].weight).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(dec == d0);
}

TEST_CASE("reconstruction dominated encoder training reduces the error") {
  Rng rng(5);
  auto enc = nn::make_encoder(5, 16, 4, rng);
  auto dec = nn::make_decoder(4, 16, 5, rng);
  const auto sd = nn::make_discriminator(4, 8, 4, 2, rng);
  const Matrix x = oracle::gaussian(rng, 32, 5);
  const auto mse = [&] { return (x - nn::predict(dec, nn::predict(enc, x))).rowwise().squaredNorm().mean(); };
  const double start = mse();
  auto ea = nn::AdamState::for_net(enc, 1e-3);
  auto da = nn::AdamState::for_net(dec, 1e-3);
  for (int step = 0; step < 200; ++step) encoder_decoder_step(enc, dec, sd, x, 0, ea, da, 1e3, 3e-5);
  CHECK(mse() < start);
}

TEST_CASE("adversarial objectives match finite differences") {
  Rng rng(6);
  auto enc = nn::make_encoder(5, 6, 4, rng);
  auto dec = nn::make_decoder(4, 6, 5, rng);
  auto sd = nn::make_discriminator(4, 6, 5, 3, rng);
  const Matrix x = oracle::gaussian(rng, 8, 5);
  {
    nn::DenseNet* nets[] = {&enc, &dec};
    const auto r = nn::finite_diff_check(nets, [&] { return encoder_objective(enc, dec, sd, x, 2, 0.5, 1e-2); });
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
  }
  {
    const std::vector<Matrix> latents = {oracle::gaussian(rng, 8, 4), oracle::gaussian(rng, 8, 4),
                                         oracle::gaussian(rng, 8, 4)};
    nn::DenseNet* nets[] = {&sd};
    const auto r = nn::finite_diff_check(
        nets, [&] { return discriminator_objective(sd, latents, std::vector<int>{0, 1, 2}); });
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("each step only touches its own networks") {
  Rng rng(7);
  std::vector<nn::DenseNet> enc, dec;
  for (int s = 0; s < 2; ++s) {
    enc.push_back(nn::make_encoder(3, 6, 4, rng));
    dec.push_back(nn::make_decoder(4, 6, 3, rng));
  }
  auto sd = nn::make_discriminator(4, 6, 5, 2, rng);
  const std::vector<Matrix> x = {oracle::gaussian(rng, 8, 3), oracle::gaussian(rng, 8, 3, 2.0)};
  auto sd_adam = nn::AdamState::for_net(sd, 1e-2);
  std::vector<nn::AdamState> ea, da;
  for (int s = 0; s < 2; ++s) {
    ea.push_back(nn::AdamState::for_net(enc[s], 1e-2));
    da.push_back(nn::AdamState::for_net(dec[s], 1e-2));
  }

  const auto enc0 = enc;
  const auto dec0 = dec;
  const auto sd0 = sd;
  discriminator_step(sd, std::vector<Matrix>{nn::predict(enc[0], x[0]), nn::predict(enc[1], x[1])},
                     std::vector<int>{0, 1}, sd_adam);
  CHECK_FALSE(sd == sd0);
  CHECK(enc == enc0);
  CHECK(dec == dec0);

  const auto sd1 = sd;
  encoder_decoder_step(enc[0], dec[0], sd, x[0], 0, ea[0], da[0], 0.01, 3e-5);
  CHECK(sd == sd1);
  CHECK_FALSE(enc[0] == enc0[0]);
  CHECK_FALSE(dec[0] == dec0[0]);
  CHECK(enc[1] == enc0[1]);
  CHECK(dec[1] == dec0[1]);
}

TEST_CASE("encode") {
  AdaptationModel model;
  model.subject_ids = {"a"};
  model.normalizers.push_back(Normalizer{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)});
  model.encoders.emplace_back(nn::Role::kEncoder, std::vector<nn::DenseLayer>{nn::DenseLayer{
                                                      Matrix::Constant(1, 1, 3.0), Eigen::VectorXd::Constant(1, -1.0),
                                                      nn::Activation::kIdentity}});
  CHECK(encode(model, "a", Matrix::Constant(1, 1, 2.0))(0, 0) == 5.0);

  Rng rng(8);
  model.encoders[0] = nn::make_encoder(1, 4, 3, rng);
  for (auto& l : model.encoders[0].layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Matrix z = encode(model, "a", oracle::gaussian(rng, 7, 1));
  CHECK(z.rows() == 7);
  CHECK(z.isZero(0.0));
  CHECK_THROWS_AS(encode(model, "missing", Matrix::Zero(1, 1)), Error);
}

TEST_CASE("latent divergence estimate") {
  Rng rng(9);
  const Matrix z = oracle::gaussian(rng, 400, 5);
  CHECK(estimate_latent_divergence(std::vector<Matrix>{z, z}) <= 0.02);
  CHECK(estimate_latent_divergence(std::vector<Matrix>{z, z, z}) <= 0.02);

  const Matrix zeros = Matrix::Zero(1000, 3);
  const Matrix hundreds = Matrix::Constant(1000, 3, 100.0);
  CHECK(estimate_latent_divergence(std::vector<Matrix>{zeros, hundreds}) >= 0.9 * std::log(2.0));

  const std::vector<Matrix> three = {oracle::gaussian(rng, 300, 5), oracle::gaussian(rng, 200, 5, 1.0),
                                     oracle::gaussian(rng, 250, 5, -0.5)};
  const double base = estimate_latent_divergence(three, 8, 32, 4);
  CHECK(base > 0.0);
  CHECK(base <= std::log(3.0));
  CHECK(estimate_latent_divergence(std::vector<Matrix>{three[2], three[0], three[1]}, 8, 32, 4) == base);
  CHECK(estimate_latent_divergence(std::vector<Matrix>{three[1], three[2], three[0]}, 8, 32, 4) == base);

  CHECK_THROWS_AS(estimate_latent_divergence(std::vector<Matrix>{z, z.topRows(49)}), Error);
  CHECK_THROWS_AS(estimate_latent_divergence(std::vector<Matrix>{z}), Error);
}

TEST_CASE("training history and determinism") {
  Rng rng(10);
  const std::vector<FeatureMatrix> subjects = {gaussian_subject("a", rng, 120, 6, 0.0),
                                               gaussian_subject("b", rng, 100, 6, 1.0)};
  const auto cfg = tiny_config();
  const auto m1 = train_adaptation(subjects, cfg);
  const auto m2 = train_adaptation(subjects, cfg);
  CHECK(m1.history.size() == cfg.epochs);
  for (std::size_t e = 0; e < m1.history.size(); ++e) CHECK(m1.history[e].epoch == e + 1);
  CHECK(m1.initial.epoch == 0);
  CHECK(m1.num_subjects() == 2);
  CHECK(m1.discriminator.out_dim() == 2);
  CHECK(serialize_model(m1) == serialize_model(m2));
  for (const auto& h : m1.history) {
    CHECK(std::isfinite(h.adv_loss));
    CHECK(std::isfinite(h.total));
    CHECK(h.sd_holdout_acc >= 0.0);
    CHECK(h.sd_holdout_acc <= 1.0);
  }
}

TEST_CASE("training rejects subjects without enough rows") {
  Rng rng(11);
  const std::vector<FeatureMatrix> subjects = {gaussian_subject("big", rng, 120, 4, 0.0),
                                               gaussian_subject("small", rng, 20, 4, 0.0)};
  try {
    train_adaptation(subjects, tiny_config());
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find("small") != std::string::npos);
  }
  CHECK_THROWS_AS(train_adaptation({subjects[0]}, tiny_config()), Error);
}

TEST_CASE("identically distributed subjects stay indistinguishable") {
  std::vector<FeatureMatrix> subjects;
  for (const char* id : {"a", "b"}) {
    Rng rng(12);  // same generator seed for both subjects
    subjects.push_back(gaussian_subject(id, rng, 400, 8, 0.0));
  }
  auto cfg = tiny_config();
  cfg.latent_dim = 16;
  cfg.encoder_hidden = 32;
  cfg.disc_hidden1 = 64;
  cfg.disc_hidden2 = 32;
  cfg.epochs = 20;
  cfg.learning_rate = 1e-4;
  const auto model = train_adaptation(subjects, cfg);
  CHECK(model.history.back().sd_holdout_acc <= 0.55);
}
