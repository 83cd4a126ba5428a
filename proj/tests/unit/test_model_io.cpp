#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "../oracles.hpp"
#include "szad/error.hpp"
#include "szad/model_io.hpp"

using namespace szad;

namespace {

AdaptationModel small_adaptation() {
  Rng rng(3);
  std::vector<FeatureMatrix> subjects;
  for (int s = 0; s < 2; ++s) {
    FeatureMatrix m{"p" + std::to_string(s), oracle::gaussian(rng, 60, 5, s), {}};
    for (int r = 0; r < 60; ++r) m.labels.push_back(r % 3 == 0 ? 1 : 0);
    subjects.push_back(m);
  }
  AdaptationConfig cfg;
  cfg.latent_dim = 4;
  cfg.encoder_hidden = 6;
  cfg.disc_hidden1 = 6;
  cfg.disc_hidden2 = 3;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = 1;
  return train_adaptation(subjects, cfg);
}

GbtModel small_gbt() {
  Rng rng(4);
  WeightedDataset d{oracle::gaussian(rng, 80, 3), {}, std::vector<double>(80, 1.0)};
  for (Eigen::Index r = 0; r < 80; ++r) d.y.push_back(d.x(r, 0) + 0.3 * d.x(r, 1) > 0.0 ? 1 : 0);
  GbtConfig cfg;
  cfg.n_trees = 12;
  return fit_gbt(d, cfg);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "szad_unit_model_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void expect_corrupt(const std::string& bytes, const std::string& needle) {
  try {
    deserialize_gbt_model(bytes);
    FAIL("expected a corrupt model error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCorruptModel);
    CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("adaptation model round trip") {
  const auto model = small_adaptation();
  const auto bytes = serialize_model(model);
  CHECK(bytes.rfind("SZAD1", 0) == 0);
  CHECK(model_kind(bytes) == ModelKind::kAdaptation);
  const auto back = deserialize_adaptation_model(bytes);
  CHECK(back.subject_ids == model.subject_ids);
  CHECK(back.discriminator == model.discriminator);
  for (std::size_t s = 0; s < model.num_subjects(); ++s) {
    CHECK(back.encoders[s] == model.encoders[s]);
    CHECK(back.decoders[s] == model.decoders[s]);
    CHECK(back.normalizers[s].mean == model.normalizers[s].mean);
    CHECK(back.normalizers[s].stddev == model.normalizers[s].stddev);
  }
  CHECK(back.history.size() == model.history.size());
  CHECK(back.history.back().total == model.history.back().total);
  CHECK(back.config.latent_dim == model.config.latent_dim);
  CHECK(serialize_model(back) == bytes);

  const auto path = scratch("adapt.szad");
  save_model(path, model);
  CHECK(peek_model_kind(path) == ModelKind::kAdaptation);
  CHECK(serialize_model(load_adaptation_model(path)) == bytes);
  CHECK_THROWS_AS(load_gbt_model(path), Error);
}

TEST_CASE("GBT model round trip") {
  const auto model = small_gbt();
  const auto bytes = serialize_model(model);
  const auto back = deserialize_gbt_model(bytes);
  CHECK(back == model);
  CHECK(serialize_model(back) == bytes);
  Rng rng(5);
  const Eigen::MatrixXd x = oracle::gaussian(rng, 20, 3);
  CHECK(gbt_raw_scores(back, x) == gbt_raw_scores(model, x));
}

TEST_CASE("damaged model files are rejected") {
  const auto bytes = serialize_model(small_gbt());
  expect_corrupt(bytes.substr(0, bytes.size() - 9), "CRC");
  expect_corrupt(bytes.substr(0, 8), "CRC");
  expect_corrupt("XXXXX" + bytes.substr(5), "bad magic");
  expect_corrupt("", "bad magic");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  expect_corrupt(flipped, "CRC");
  CHECK_THROWS_AS(deserialize_adaptation_model(bytes), Error);

  const auto path = scratch("truncated.szad");
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  try {
    load_gbt_model(path);
    FAIL("expected a corrupt model error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCorruptModel);
  }
  CHECK_THROWS_AS(load_gbt_model(scratch("does-not-exist.szad")), Error);
}
