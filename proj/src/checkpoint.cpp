#include <cstring>
#include <fstream>
#include <iterator>

#include "appgen/common.hpp"
#include "appgen/optim.hpp"
#include "appgen/orchestrator.hpp"

namespace appgen {

namespace {

constexpr char kMagic[8] = {'A', 'P', 'P', 'G', 'E', 'N', 'C', 'K'};

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  template <class Derived>
  void tensor(const Eigen::DenseBase<Derived>& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    const typename Derived::PlainObject plain = m;
    buf_.append(reinterpret_cast<const char*>(plain.data()), sizeof(double) * plain.size());
  }
  void ints(const std::vector<int>& v) {
    pod<std::uint64_t>(v.size());
    for (int x : v) pod<std::int32_t>(x);
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    for (double x : v) pod(x);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(at_, n);
    at_ += n;
    return s;
  }
  template <class M>
  void tensor(M& m) {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0) corrupt("negative tensor shape");
    if constexpr (M::ColsAtCompileTime == 1) {
      if (cols != 1) corrupt("vector tensor with more than one column");
      m.resize(rows);
    } else {
      m.resize(rows, cols);
    }
    const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    need(bytes);
    std::memcpy(m.data(), buf_.data() + at_, bytes);
    at_ += bytes;
  }
  std::vector<int> ints() {
    const auto n = pod<std::uint64_t>();
    need(n * sizeof(std::int32_t));
    std::vector<int> v(n);
    for (auto& x : v) x = pod<std::int32_t>();
    return v;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    for (auto& x : v) x = pod<double>();
    return v;
  }
  bool done() const { return at_ == end_; }

  [[noreturn]] static void corrupt(const std::string& why) {
    throw Error("corrupt-checkpoint", "checkpoint is corrupt: " + why);
  }

 private:
  void need(std::size_t n) const {
    if (n > end_ - at_) corrupt("unexpected end of data");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t at_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.pod<std::int32_t>(c.window);
  w.pod<std::int32_t>(c.attn_dim);
  w.pod<std::int32_t>(c.value_dim);
  w.pod<std::int32_t>(c.diffusion_steps);
  w.pod(c.beta_start);
  w.pod(c.beta_end);
  w.pod(c.lambda_alpha);
  w.pod<std::int32_t>(c.channels);
  w.pod<std::int32_t>(c.blocks);
  w.pod<std::int32_t>(c.step_hidden);
  w.pod(c.learning_rate);
  w.pod(c.final_lr_fraction);
  w.pod<std::int32_t>(c.batch_size);
  w.pod<std::int32_t>(c.epochs);
  w.pod(c.seed);
  w.pod(c.tz_offset_seconds);
  w.pod<std::int32_t>(static_cast<std::int32_t>(c.variant));
  w.pod<std::uint8_t>(c.standardize_apps ? 1 : 0);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.window = r.pod<std::int32_t>();
  c.attn_dim = r.pod<std::int32_t>();
  c.value_dim = r.pod<std::int32_t>();
  c.diffusion_steps = r.pod<std::int32_t>();
  c.beta_start = r.pod<double>();
  c.beta_end = r.pod<double>();
  c.lambda_alpha = r.pod<double>();
  c.channels = r.pod<std::int32_t>();
  c.blocks = r.pod<std::int32_t>();
  c.step_hidden = r.pod<std::int32_t>();
  c.learning_rate = r.pod<double>();
  c.final_lr_fraction = r.pod<double>();
  c.batch_size = r.pod<std::int32_t>();
  c.epochs = r.pod<std::int32_t>();
  c.seed = r.pod<std::uint64_t>();
  c.tz_offset_seconds = r.pod<std::int64_t>();
  const auto v = r.pod<std::int32_t>();
  if (v < 0 || v > 3) Reader::corrupt("unknown ablation variant");
  c.variant = static_cast<AblationVariant>(v);
  c.standardize_apps = r.pod<std::uint8_t>() != 0;
  return c;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.buffer().append(kMagic, sizeof(kMagic));
  w.pod(kCheckpointVersion);
  w.str(ckpt.config_text);
  w.pod(ckpt.config_hash);
  write_config(w, ckpt.config);
  w.pod<std::int32_t>(ckpt.denoiser.config.length);
  w.pod<std::int32_t>(ckpt.denoiser.config.history_dim);
  w.pod<std::int32_t>(ckpt.denoiser.config.context_dim);
  w.tensor(ckpt.apps.vectors);
  w.tensor(ckpt.locations.vectors);
  w.ints(ckpt.app_category);
  AttentionParams::visit(ckpt.attention, [&](const auto& t) { w.tensor(t); });
  DenoiserParams::visit(ckpt.denoiser, [&](const auto& t) { w.tensor(t); });
  w.tensor(ckpt.schedule.beta);
  w.pod<std::int32_t>(ckpt.metadata.best_epoch);
  w.pod<std::int32_t>(ckpt.metadata.epochs_run);
  w.pod(ckpt.metadata.seed);
  w.doubles(ckpt.metadata.train_loss);
  w.doubles(ckpt.metadata.validation_loss);
  const std::uint64_t checksum = fnv1a(w.buffer());
  w.pod(checksum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io-error", "cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error("io-error", "failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing-checkpoint", "cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t))
    Reader::corrupt("file is truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) Reader::corrupt("bad magic");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion)
    throw Error("checkpoint-version", "checkpoint version " + std::to_string(version) + ", expected " +
                                          std::to_string(kCheckpointVersion));
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (fnv1a(std::string_view(buf.data(), body)) != stored) Reader::corrupt("checksum mismatch (truncated or modified)");

  Reader r(buf, body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.pod<char>();
  r.pod<std::uint32_t>();
  ModelCheckpoint ckpt;
  ckpt.config_text = r.str();
  ckpt.config_hash = r.pod<std::uint64_t>();
  if (fnv1a(ckpt.config_text) != ckpt.config_hash)
    throw Error("config-hash-mismatch", "embedded config does not match its stored hash");
  ckpt.config = read_config(r);
  ckpt.config.validate();

  DenoiserConfig dc;
  dc.length = r.pod<std::int32_t>();
  dc.history_dim = r.pod<std::int32_t>();
  dc.context_dim = r.pod<std::int32_t>();
  dc.channels = ckpt.config.channels;
  dc.blocks = ckpt.config.blocks;
  dc.step_hidden = ckpt.config.step_hidden;
  ckpt.apps.domain = EmbeddingDomain::app;
  ckpt.locations.domain = EmbeddingDomain::location;
  r.tensor(ckpt.apps.vectors);
  r.tensor(ckpt.locations.vectors);
  ckpt.app_category = r.ints();
  AttentionParams::visit(ckpt.attention, [&](auto& t) { r.tensor(t); });
  ckpt.denoiser.config = dc;
  ckpt.denoiser.blocks.resize(dc.blocks);
  DenoiserParams::visit(ckpt.denoiser, [&](auto& t) { r.tensor(t); });
  Eigen::VectorXd beta;
  r.tensor(beta);
  ckpt.schedule = schedule_from_betas(beta);
  ckpt.metadata.best_epoch = r.pod<std::int32_t>();
  ckpt.metadata.epochs_run = r.pod<std::int32_t>();
  ckpt.metadata.seed = r.pod<std::uint64_t>();
  ckpt.metadata.train_loss = r.doubles();
  ckpt.metadata.validation_loss = r.doubles();
  if (!r.done()) Reader::corrupt("trailing bytes");

  // shapes must agree with the declared dimensions
  const auto& d = ckpt.denoiser;
  if (ckpt.apps.dim() != dc.length || d.input_w.rows() != dc.channels || d.history_w.cols() != dc.history_dim ||
      d.context_w.cols() != dc.context_dim || ckpt.attention.value_dim() + 1 != dc.history_dim ||
      kTemporalDim + ckpt.locations.dim() != dc.context_dim ||
      ckpt.attention.feature_dim() != kTemporalDim + ckpt.locations.dim() + ckpt.apps.dim() ||
      ckpt.schedule.steps() != ckpt.config.diffusion_steps)
    Reader::corrupt("tensor shapes disagree with the configuration");
  return ckpt;
}

}  // namespace appgen
