#include "szad/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>
#include <vector>

#include <zlib.h>

#include "szad/error.hpp"
#include "szad/text.hpp"

namespace szad {
namespace {

constexpr char kMagic[] = {'S', 'Z', 'A', 'D', '1'};
constexpr std::size_t kMagicSize = sizeof kMagic;

using Matrix = Eigen::MatrixXd;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t begin, std::size_t end) : bytes_(bytes), pos_(begin), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::uint64_t n) const {
    require(n <= end_ - pos_, ErrorKind::kCorruptModel, "model file truncated");
  }
  const std::string& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

// Key/value metadata plus named matrices, in insertion order.
struct Container {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> blocks;

  void put(const std::string& k, const std::string& v) { meta.emplace_back(k, v); }
  void put(const std::string& k, std::size_t v) { meta.emplace_back(k, std::to_string(v)); }
  void put(const std::string& k, double v) { meta.emplace_back(k, text::format_double(v)); }
  void put_block(const std::string& k, Matrix m) { blocks.emplace_back(k, std::move(m)); }
};

struct Parsed {
  std::map<std::string, std::string> meta;
  std::map<std::string, Matrix> blocks;

  const std::string& get(const std::string& k) const {
    const auto it = meta.find(k);
    require(it != meta.end(), ErrorKind::kCorruptModel, "model file lacks field '" + k + "'");
    return it->second;
  }
  std::size_t size(const std::string& k) const {
    std::size_t v = 0;
    require(text::parse_size(get(k), v), ErrorKind::kCorruptModel, "field '" + k + "' is not an integer");
    return v;
  }
  double real(const std::string& k) const {
    double v = 0.0;
    require(text::parse_double(get(k), v), ErrorKind::kCorruptModel, "field '" + k + "' is not a number");
    return v;
  }
  bool flag(const std::string& k) const { return get(k) == "1"; }
  const Matrix& block(const std::string& k) const {
    const auto it = blocks.find(k);
    require(it != blocks.end(), ErrorKind::kCorruptModel, "model file lacks block '" + k + "'");
    return it->second;
  }
};

std::string encode(ModelKind kind, const Container& c) {
  Writer w;
  w.raw(kMagic, kMagicSize);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u64(c.meta.size());
  for (const auto& [k, v] : c.meta) {
    w.str(k);
    w.str(v);
  }
  w.u64(c.blocks.size());
  for (const auto& [name, m] : c.blocks) {
    w.str(name);
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
  }
  for (const auto& [name, m] : c.blocks) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) w.f64(m(r, col));
    }
  }
  std::string& bytes = w.bytes();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
  w.u32(crc);
  return std::move(bytes);
}

Parsed decode(const std::string& bytes, ModelKind expected) {
  require(bytes.size() >= kMagicSize && std::memcmp(bytes.data(), kMagic, kMagicSize) == 0, ErrorKind::kCorruptModel,
          "bad magic: not an SZAD1 model file");
  require(bytes.size() >= kMagicSize + 12, ErrorKind::kCorruptModel, "CRC mismatch: model file truncated");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes, body, bytes.size());
  const std::uint32_t stored = tail.u32();
  const auto actual =
      static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  require(stored == actual, ErrorKind::kCorruptModel, "CRC mismatch: model file is damaged or truncated");
  Reader r(bytes, kMagicSize, body);
  const std::uint32_t version = r.u32();
  require(version == kModelFormatVersion, ErrorKind::kCorruptModel,
          "version mismatch: file has " + std::to_string(version) + ", expected " +
              std::to_string(kModelFormatVersion));
  const std::uint32_t kind = r.u32();
  require(kind == static_cast<std::uint32_t>(expected), ErrorKind::kCorruptModel,
          "model kind mismatch: file holds kind " + std::to_string(kind));
  Parsed p;
  const std::uint64_t n_meta = r.u64();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    p.meta[k] = r.str();
  }
  const std::uint64_t n_blocks = r.u64();
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> manifest;
  for (std::uint64_t i = 0; i < n_blocks; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    require(rows < (1ULL << 32) && cols < (1ULL << 32), ErrorKind::kCorruptModel, "implausible block shape");
    manifest.emplace_back(std::move(name), rows, cols);
  }
  for (const auto& [name, rows, cols] : manifest) {
    require(rows * cols <= r.remaining() / 8, ErrorKind::kCorruptModel, "block '" + name + "' exceeds file size");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
    }
    p.blocks[name] = std::move(m);
  }
  require(r.done(), ErrorKind::kCorruptModel, "trailing bytes after model payload");
  return p;
}

void put_net(Container& c, const std::string& prefix, const nn::DenseNet& net) {
  c.put(prefix + ".role", static_cast<std::size_t>(net.role()));
  c.put(prefix + ".layers", net.layers().size());
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const auto& layer = net.layers()[k];
    const std::string lp = prefix + ".layer" + std::to_string(k);
    c.put(lp + ".activation", static_cast<std::size_t>(layer.activation));
    c.put_block(lp + ".weight", layer.weight);
    c.put_block(lp + ".bias", layer.bias);
  }
}

nn::DenseNet get_net(const Parsed& p, const std::string& prefix) {
  const std::size_t role = p.size(prefix + ".role");
  require(role <= static_cast<std::size_t>(nn::Role::kProbe), ErrorKind::kCorruptModel, "bad role for " + prefix);
  std::vector<nn::DenseLayer> layers;
  const std::size_t n = p.size(prefix + ".layers");
  for (std::size_t k = 0; k < n; ++k) {
    const std::string lp = prefix + ".layer" + std::to_string(k);
    const std::size_t act = p.size(lp + ".activation");
    require(act <= 1, ErrorKind::kCorruptModel, "bad activation for " + lp);
    nn::DenseLayer layer;
    layer.weight = p.block(lp + ".weight");
    const Matrix& b = p.block(lp + ".bias");
    require(b.cols() == 1 && b.rows() == layer.weight.rows(), ErrorKind::kCorruptModel, "bias shape mismatch in " + lp);
    layer.bias = b.col(0);
    layer.activation = static_cast<nn::Activation>(act);
    if (!layers.empty()) {
      require(layers.back().out_dim() == layer.in_dim(), ErrorKind::kCorruptModel, "layer widths do not chain in " + prefix);
    }
    layers.push_back(std::move(layer));
  }
  return nn::DenseNet(static_cast<nn::Role>(role), std::move(layers));
}

constexpr int kHistoryCols = 9;

Eigen::RowVectorXd history_row(const EpochRecord& r) {
  Eigen::RowVectorXd row(kHistoryCols);
  row << static_cast<double>(r.epoch), r.adv_loss, r.rec_loss, r.l1, r.total, r.sd_holdout_acc, r.sd_holdout_ce,
      r.holdout_rec_loss, r.jsd_estimate;
  return row;
}

EpochRecord history_record(const Eigen::RowVectorXd& row) {
  EpochRecord r;
  r.epoch = static_cast<std::size_t>(row[0]);
  r.adv_loss = row[1];
  r.rec_loss = row[2];
  r.l1 = row[3];
  r.total = row[4];
  r.sd_holdout_acc = row[5];
  r.sd_holdout_ce = row[6];
  r.holdout_rec_loss = row[7];
  r.jsd_estimate = row[8];
  return r;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read model file " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "failed writing model file " + path.string());
}

template <class F>
auto with_path(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

}  // namespace

std::string serialize_model(const AdaptationModel& model) {
  Container c;
  const auto& cfg = model.config;
  c.put("config.latent_dim", cfg.latent_dim);
  c.put("config.encoder_hidden", cfg.encoder_hidden);
  c.put("config.disc_hidden1", cfg.disc_hidden1);
  c.put("config.disc_hidden2", cfg.disc_hidden2);
  c.put("config.batch_size", cfg.batch_size);
  c.put("config.epochs", cfg.epochs);
  c.put("config.learning_rate", cfg.learning_rate);
  c.put("config.encoder_learning_rate", cfg.encoder_learning_rate);
  c.put("config.decoder_learning_rate", cfg.decoder_learning_rate);
  c.put("config.discriminator_learning_rate", cfg.discriminator_learning_rate);
  c.put("config.alpha", cfg.alpha);
  c.put("config.lambda", cfg.lambda);
  c.put("config.holdout_fraction", cfg.holdout_fraction);
  c.put("config.track_divergence", std::string(cfg.track_divergence ? "1" : "0"));
  c.put("config.shared_init", std::string(cfg.shared_init ? "1" : "0"));
  c.put("config.seed", std::to_string(cfg.seed));
  c.put("subjects", model.subject_ids.size());
  for (std::size_t i = 0; i < model.subject_ids.size(); ++i) {
    const std::string sp = "subject" + std::to_string(i);
    c.put(sp + ".id", model.subject_ids[i]);
    c.put_block(sp + ".norm_mean", model.normalizers[i].mean);
    c.put_block(sp + ".norm_std", model.normalizers[i].stddev);
    put_net(c, sp + ".encoder", model.encoders[i]);
    put_net(c, sp + ".decoder", model.decoders[i]);
  }
  put_net(c, "discriminator", model.discriminator);
  Matrix history(static_cast<Eigen::Index>(model.history.size() + 1), kHistoryCols);
  history.row(0) = history_row(model.initial);
  for (std::size_t k = 0; k < model.history.size(); ++k) {
    history.row(static_cast<Eigen::Index>(k + 1)) = history_row(model.history[k]);
  }
  c.put_block("history", history);
  return encode(ModelKind::kAdaptation, c);
}

AdaptationModel deserialize_adaptation_model(const std::string& bytes) {
  const Parsed p = decode(bytes, ModelKind::kAdaptation);
  AdaptationModel m;
  auto& cfg = m.config;
  cfg.latent_dim = p.size("config.latent_dim");
  cfg.encoder_hidden = p.size("config.encoder_hidden");
  cfg.disc_hidden1 = p.size("config.disc_hidden1");
  cfg.disc_hidden2 = p.size("config.disc_hidden2");
  cfg.batch_size = p.size("config.batch_size");
  cfg.epochs = p.size("config.epochs");
  cfg.learning_rate = p.real("config.learning_rate");
  cfg.encoder_learning_rate = p.real("config.encoder_learning_rate");
  cfg.decoder_learning_rate = p.real("config.decoder_learning_rate");
  cfg.discriminator_learning_rate = p.real("config.discriminator_learning_rate");
  cfg.alpha = p.real("config.alpha");
  cfg.lambda = p.real("config.lambda");
  cfg.holdout_fraction = p.real("config.holdout_fraction");
  cfg.track_divergence = p.flag("config.track_divergence");
  cfg.shared_init = p.flag("config.shared_init");
  try {
    cfg.seed = std::stoull(p.get("config.seed"));
  } catch (const std::exception&) {
    fail(ErrorKind::kCorruptModel, "field 'config.seed' is not an integer");
  }
  const std::size_t ns = p.size("subjects");
  for (std::size_t i = 0; i < ns; ++i) {
    const std::string sp = "subject" + std::to_string(i);
    m.subject_ids.push_back(p.get(sp + ".id"));
    Normalizer norm;
    norm.mean = p.block(sp + ".norm_mean").col(0);
    norm.stddev = p.block(sp + ".norm_std").col(0);
    m.normalizers.push_back(std::move(norm));
    m.encoders.push_back(get_net(p, sp + ".encoder"));
    m.decoders.push_back(get_net(p, sp + ".decoder"));
    require(m.encoders.back().out_dim() == static_cast<Eigen::Index>(cfg.latent_dim), ErrorKind::kCorruptModel,
            "encoder width disagrees with latent_dim");
  }
  m.discriminator = get_net(p, "discriminator");
  const Matrix& history = p.block("history");
  require(history.rows() >= 1 && history.cols() == kHistoryCols, ErrorKind::kCorruptModel, "bad history block");
  m.initial = history_record(history.row(0));
  for (Eigen::Index k = 1; k < history.rows(); ++k) m.history.push_back(history_record(history.row(k)));
  return m;
}

std::string serialize_model(const GbtModel& model) {
  Container c;
  c.put("config.n_trees", model.config.n_trees);
  c.put("config.max_depth", model.config.max_depth);
  c.put("config.learning_rate", model.config.learning_rate);
  c.put("config.min_child_weight", model.config.min_child_weight);
  c.put("config.split_l2", model.config.split_l2);
  c.put("n_features", model.n_features);
  c.put("trees", model.trees.size());
  c.put_block("base_score", Matrix::Constant(1, 1, model.base_score));
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    Matrix m(static_cast<Eigen::Index>(nodes.size()), 5);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto& n = nodes[k];
      m.row(static_cast<Eigen::Index>(k)) << n.feature, n.threshold, n.left, n.right, n.value;
    }
    c.put_block("tree" + std::to_string(t), m);
  }
  return encode(ModelKind::kGbt, c);
}

GbtModel deserialize_gbt_model(const std::string& bytes) {
  const Parsed p = decode(bytes, ModelKind::kGbt);
  GbtModel m;
  m.config.n_trees = p.size("config.n_trees");
  m.config.max_depth = p.size("config.max_depth");
  m.config.learning_rate = p.real("config.learning_rate");
  m.config.min_child_weight = p.real("config.min_child_weight");
  m.config.split_l2 = p.real("config.split_l2");
  m.n_features = p.size("n_features");
  const Matrix& base = p.block("base_score");
  require(base.size() == 1, ErrorKind::kCorruptModel, "bad base_score block");
  m.base_score = base(0, 0);
  const std::size_t n_trees = p.size("trees");
  for (std::size_t t = 0; t < n_trees; ++t) {
    const Matrix& b = p.block("tree" + std::to_string(t));
    require(b.cols() == 5 && b.rows() >= 1, ErrorKind::kCorruptModel, "bad tree block " + std::to_string(t));
    Tree tree;
    const auto count = static_cast<double>(b.rows());
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      TreeNode n;
      n.feature = static_cast<std::int32_t>(b(k, 0));
      n.threshold = b(k, 1);
      n.left = static_cast<std::int32_t>(b(k, 2));
      n.right = static_cast<std::int32_t>(b(k, 3));
      n.value = b(k, 4);
      if (!n.is_leaf()) {
        require(b(k, 0) < static_cast<double>(m.n_features) && b(k, 2) > static_cast<double>(k) && b(k, 2) < count &&
                    b(k, 3) > static_cast<double>(k) && b(k, 3) < count,
                ErrorKind::kCorruptModel, "bad node in tree " + std::to_string(t));
      }
      tree.nodes.push_back(n);
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

ModelKind model_kind(const std::string& bytes) {
  require(bytes.size() >= kMagicSize + 8 && std::memcmp(bytes.data(), kMagic, kMagicSize) == 0,
          ErrorKind::kCorruptModel, "bad magic: not an SZAD1 model file");
  Reader r(bytes, kMagicSize, bytes.size());
  r.u32();
  const std::uint32_t kind = r.u32();
  require(kind == 1 || kind == 2, ErrorKind::kCorruptModel, "unknown model kind " + std::to_string(kind));
  return static_cast<ModelKind>(kind);
}

void save_model(const std::filesystem::path& path, const AdaptationModel& model) {
  write_file(path, serialize_model(model));
}

void save_model(const std::filesystem::path& path, const GbtModel& model) { write_file(path, serialize_model(model)); }

AdaptationModel load_adaptation_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return with_path(path, [&] { return deserialize_adaptation_model(bytes); });
}

GbtModel load_gbt_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return with_path(path, [&] { return deserialize_gbt_model(bytes); });
}

ModelKind peek_model_kind(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return with_path(path, [&] { return model_kind(bytes); });
}

}  // namespace szad
