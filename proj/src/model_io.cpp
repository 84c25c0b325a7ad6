#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sepsis/errors.hpp"
#include "sepsis/learners.hpp"

namespace sepsis {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'P', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

// Fixed little-endian encoding, so model files round-trip bit-exactly
// across platforms.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : buf_(std::move(bytes)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    const char* p = take(n);
    return std::string(p, n);
  }
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw ValidationError("corrupted model file: truncated data");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_tree(Writer& w, const Tree& t) {
  w.u32(static_cast<std::uint32_t>(t.n_nodes()));
  for (std::size_t i = 0; i < t.n_nodes(); ++i) {
    w.i32(t.feature[i]);
    w.f64(t.threshold[i]);
    w.i32(t.left[i]);
    w.i32(t.right[i]);
    w.f64(t.value[i]);
    w.f64(t.cover[i]);
    w.f64(t.gain[i]);
  }
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  Writer w;
  w.u32(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(model.kind));
  w.u8(model.converged ? 1 : 0);
  w.u64(model.train_seed);

  w.u8(static_cast<std::uint8_t>(model.recipe.scaling));
  w.u32(static_cast<std::uint32_t>(model.recipe.stats.size()));
  for (const auto& s : model.recipe.stats) {
    w.f64(s.mean);
    w.f64(s.sd);
  }

  w.u32(static_cast<std::uint32_t>(model.feature_names.size()));
  for (const auto& name : model.feature_names) w.str(name);

  const auto& hp = model.hp;
  w.f64(hp.l2_strength);
  w.u32(static_cast<std::uint32_t>(hp.max_iters));
  w.f64(hp.tol);
  w.u32(static_cast<std::uint32_t>(hp.n_trees));
  w.f64(hp.learning_rate);
  w.u32(static_cast<std::uint32_t>(hp.max_depth));
  w.u32(static_cast<std::uint32_t>(hp.min_leaf));
  w.u32(static_cast<std::uint32_t>(hp.feature_subsample));
  w.u8(hp.bootstrap ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(hp.n_bins));
  w.u32(static_cast<std::uint32_t>(hp.max_leaves));

  if (model.is_tree_model()) {
    w.u8(1);
    w.f64(model.base_score);
    w.u32(static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& t : model.trees) write_tree(w, t);
  } else {
    w.u8(0);
    w.u32(static_cast<std::uint32_t>(model.weights.size()));
    for (double wj : model.weights) w.f64(wj);
    w.f64(model.intercept);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("unrecognized format: '" + path.string() + "' is not a SEPM model file");
  }
  std::vector<char> rest{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Reader r(std::move(rest));

  const std::uint32_t version = r.u32();
  if (version > kFormatVersion) {
    throw ValidationError("unsupported version " + std::to_string(version) +
                          " (this build reads up to " + std::to_string(kFormatVersion) + ")");
  }

  TrainedModel model;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(ModelKind::hist_gradient_boosting)) {
    throw ValidationError("corrupted model file: bad model kind");
  }
  model.kind = static_cast<ModelKind>(kind);
  model.converged = r.u8() != 0;
  model.train_seed = r.u64();

  const std::uint8_t scaling = r.u8();
  if (scaling > 1) throw ValidationError("corrupted model file: bad scaling mode");
  model.recipe.scaling = static_cast<Scaling>(scaling);
  const std::uint32_t n_stats = r.u32();
  model.recipe.stats.resize(n_stats);
  for (auto& s : model.recipe.stats) {
    s.mean = r.f64();
    s.sd = r.f64();
  }

  const std::uint32_t n_features = r.u32();
  model.feature_names.resize(n_features);
  for (auto& name : model.feature_names) name = r.str();

  auto& hp = model.hp;
  hp.l2_strength = r.f64();
  hp.max_iters = static_cast<int>(r.u32());
  hp.tol = r.f64();
  hp.n_trees = static_cast<int>(r.u32());
  hp.learning_rate = r.f64();
  hp.max_depth = static_cast<int>(r.u32());
  hp.min_leaf = static_cast<int>(r.u32());
  hp.feature_subsample = static_cast<int>(r.u32());
  hp.bootstrap = r.u8() != 0;
  hp.n_bins = static_cast<int>(r.u32());
  hp.max_leaves = static_cast<int>(r.u32());

  const std::uint8_t tag = r.u8();
  if (tag == 1) {
    if (!model.is_tree_model()) {
      throw ValidationError("corrupted model file: ensemble block under a linear kind");
    }
    model.base_score = r.f64();
    const std::uint32_t n_trees = r.u32();
    model.trees.resize(n_trees);
    for (auto& t : model.trees) {
      const std::uint32_t n = r.u32();
      if (n == 0) throw ValidationError("corrupted model file: empty tree");
      t.feature.resize(n);
      t.threshold.resize(n);
      t.left.resize(n);
      t.right.resize(n);
      t.value.resize(n);
      t.cover.resize(n);
      t.gain.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        t.feature[i] = r.i32();
        t.threshold[i] = r.f64();
        t.left[i] = r.i32();
        t.right[i] = r.i32();
        t.value[i] = r.f64();
        t.cover[i] = r.f64();
        t.gain[i] = r.f64();
      }
      t.validate();
    }
  } else if (tag == 0) {
    if (model.is_tree_model()) {
      throw ValidationError("corrupted model file: linear block under a tree kind");
    }
    const std::uint32_t d = r.u32();
    model.weights.resize(d);
    for (auto& wj : model.weights) wj = r.f64();
    model.intercept = r.f64();
  } else {
    throw ValidationError("corrupted model file: unknown parameter block tag");
  }

  if (!r.exhausted()) throw ValidationError("corrupted model file: trailing bytes");
  if (model.is_tree_model()) {
    if (model.trees.empty()) throw ValidationError("corrupted model file: no trees");
  } else if (model.weights.size() != model.feature_names.size()) {
    throw ValidationError("corrupted model file: weight/feature count mismatch");
  }
  return model;
}

}  // namespace sepsis
