#include <mixnet/io.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

// Layout (all integers u64 little-endian, all reals f64 little-endian):
//   magic "MIXNET01"
//   K, generator spec, K x generator parameters
//   K priors
//   bandwidth count, bandwidths
//   has_autoencoder, [encoder spec + params, decoder spec + params]
//   code-range dim (0 = identity), lo, hi
//   normalization dim, feature_min, feature_max
//   seed count, seeds
// A spec is: size count, sizes, output activation (0 sigmoid, 1 linear).
// Parameters are per layer: weights row-major, then biases.

namespace mixnet {

namespace {

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Vector& v) {
    for (Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void spec(const MlpSpec& s) {
    u64(s.layer_sizes.size());
    for (Index n : s.layer_sizes) u64(static_cast<std::uint64_t>(n));
    u64(s.output == OutputActivation::Linear ? 1 : 0);
  }
  void net(const MlpNetwork& n) {
    for (std::size_t l = 0; l < n.num_layers(); ++l) {
      const Matrix& w = n.weights[l];
      for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) f64(w(r, c));
      vec(n.biases[l]);
    }
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Index count(std::uint64_t limit, const char* what) {
    const std::uint64_t v = u64();
    if (v > limit) throw FormatError(std::string("checkpoint: implausible ") + what);
    return static_cast<Index>(v);
  }
  Vector vec(Index n) {
    need(static_cast<std::size_t>(n) * 8);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  MlpSpec spec() {
    MlpSpec s;
    const Index n = count(1024, "layer count");
    for (Index i = 0; i < n; ++i) s.layer_sizes.push_back(count(1u << 24, "layer size"));
    const std::uint64_t act = u64();
    if (act > 1) throw FormatError("checkpoint: unknown output activation");
    s.output = act == 1 ? OutputActivation::Linear : OutputActivation::Sigmoid;
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return s;
  }
  MlpNetwork net(const MlpSpec& s) {
    MlpNetwork n = zero_network<double>(s);
    for (std::size_t l = 0; l < n.num_layers(); ++l) {
      Matrix& w = n.weights[l];
      need(static_cast<std::size_t>(w.size()) * 8);
      for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) w(r, c) = f64();
      n.biases[l] = vec(n.biases[l].size());
    }
    return n;
  }
  void expect(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(b_.data() + pos_, p, n) != 0) throw FormatError("checkpoint: bad magic");
    pos_ += n;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  const MixtureModel& m = ckpt.model;
  m.validate();
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u64(static_cast<std::uint64_t>(m.num_components()));
  w.spec(m.networks.front().spec);
  for (const auto& n : m.networks) w.net(n);
  w.vec(m.priors);
  w.u64(m.kernel.bandwidths.size());
  for (double s : m.kernel.bandwidths) w.f64(s);
  w.u64(m.autoencoder ? 1 : 0);
  if (m.autoencoder) {
    w.spec(m.autoencoder->encoder.spec);
    w.net(m.autoencoder->encoder);
    w.spec(m.autoencoder->decoder.spec);
    w.net(m.autoencoder->decoder);
  }
  w.u64(static_cast<std::uint64_t>(m.code_range.lo.size()));
  w.vec(m.code_range.lo);
  w.vec(m.code_range.hi);
  w.u64(static_cast<std::uint64_t>(ckpt.normalization.feature_min.size()));
  w.vec(ckpt.normalization.feature_min);
  w.vec(ckpt.normalization.feature_max);
  w.u64(ckpt.seeds.size());
  for (std::uint64_t s : ckpt.seeds) w.u64(s);
  return w.take();
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t prefix = 6;  // "MIXNET"
  if (bytes.size() >= sizeof kCheckpointMagic && std::memcmp(bytes.data(), kCheckpointMagic, prefix) == 0 &&
      std::memcmp(bytes.data() + prefix, kCheckpointMagic + prefix, 2) != 0)
    throw FormatError("checkpoint: unsupported format version '" + bytes.substr(prefix, 2) + "'");

  Reader r(bytes);
  r.expect(kCheckpointMagic, sizeof kCheckpointMagic);
  ModelCheckpoint ck;
  MixtureModel& m = ck.model;
  const Index k = r.count(1u << 16, "component count");
  if (k < 1) throw FormatError("checkpoint: no components");
  const MlpSpec spec = r.spec();
  for (Index j = 0; j < k; ++j) m.networks.push_back(r.net(spec));
  m.priors = r.vec(k);
  const Index nb = r.count(1024, "bandwidth count");
  m.kernel.bandwidths.clear();
  for (Index i = 0; i < nb; ++i) m.kernel.bandwidths.push_back(r.f64());
  const std::uint64_t has_ae = r.u64();
  if (has_ae > 1) throw FormatError("checkpoint: bad autoencoder flag");
  if (has_ae) {
    Autoencoder ae;
    const MlpSpec es = r.spec();
    ae.encoder = r.net(es);
    const MlpSpec ds = r.spec();
    ae.decoder = r.net(ds);
    m.autoencoder = std::move(ae);
  }
  const Index cd = r.count(1u << 24, "code dimension");
  m.code_range.lo = r.vec(cd);
  m.code_range.hi = r.vec(cd);
  const Index nd = r.count(1u << 24, "data dimension");
  ck.normalization.feature_min = r.vec(nd);
  ck.normalization.feature_max = r.vec(nd);
  const Index ns = r.count(1024, "seed count");
  for (Index i = 0; i < ns; ++i) ck.seeds.push_back(r.u64());
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: inconsistent model: ") + e.what());
  }
  return ck;
}

void save_model(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace mixnet
