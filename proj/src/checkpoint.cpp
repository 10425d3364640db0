#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "driveflow/error.hpp"
#include "driveflow/training.hpp"

namespace driveflow {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  const char* take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw CheckpointTruncatedError(path_ + ": truncated while reading " + what + " at byte " +
                                     std::to_string(pos_));
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint64_t n = u64(what);
    if (n > data_.size() - pos_) {
      throw CheckpointTruncatedError(path_ + ": truncated while reading " + what + " at byte " +
                                     std::to_string(pos_));
    }
    return std::string(take(n, what), n);
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(ckpt.spec.serialize());
  w.u64(ckpt.epoch);
  w.f64(ckpt.val_angle_mae);
  w.f64(ckpt.val_speed_mae);
  w.u64(ckpt.rng_digest);
  w.u64(ckpt.parameters.size());
  for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) {
    const Tensor& p = ckpt.parameters[i];
    w.str(i < ckpt.names.size() ? ckpt.names[i] : std::string());
    w.u32(static_cast<std::uint32_t>(p.rank()));
    for (std::size_t d : p.shape()) w.u64(d);
    for (double v : p.data()) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Reader r(data, path.string());

  if (data.size() >= 4 && std::memcmp(data.data(), kMagic, 4) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  try {
    ckpt.spec = ModelSpec::deserialize(r.str("model spec"));
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  ckpt.epoch = r.u64("epoch");
  ckpt.val_angle_mae = r.f64("validation angle MAE");
  ckpt.val_speed_mae = r.f64("validation speed MAE");
  ckpt.rng_digest = r.u64("rng digest");
  const std::uint64_t count = r.u64("parameter count");
  for (std::uint64_t i = 0; i < count; ++i) {
    ckpt.names.push_back(r.str("parameter name"));
    const std::uint32_t rank = r.u32("parameter rank");
    if (rank == 0 || rank > 8) {
      throw CheckpointShapeError(path.string() + ": parameter " + ckpt.names.back() + " has invalid rank " +
                                 std::to_string(rank));
    }
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64("parameter dims");
      if (d == 0 || d > (std::uint64_t{1} << 32)) {
        throw CheckpointShapeError(path.string() + ": parameter " + ckpt.names.back() + " has invalid dimension");
      }
      shape.push_back(static_cast<std::size_t>(d));
      numel *= d;
    }
    if (numel > data.size() / 8) {
      throw CheckpointTruncatedError(path.string() + ": truncated in parameter " + ckpt.names.back());
    }
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (double& v : values) v = r.f64("parameter values");
    ckpt.parameters.emplace_back(std::move(shape), std::move(values));
  }
  if (!r.at_end()) throw CheckpointError(path.string() + ": trailing bytes after checkpoint payload");

  // Reject parameter sets that do not fit the recorded architecture.
  try {
    const Model reference = Model::build(ckpt.spec, 0);
    if (reference.parameters().size() != ckpt.parameters.size()) {
      throw CheckpointShapeError(path.string() + ": " + std::to_string(ckpt.parameters.size()) +
                                 " parameter tensors, architecture needs " +
                                 std::to_string(reference.parameters().size()));
    }
    for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) {
      if (reference.parameters()[i].shape() != ckpt.parameters[i].shape()) {
        throw CheckpointShapeError(path.string() + ": parameter " + reference.parameter_names()[i] +
                                   " has shape " + shape_string(ckpt.parameters[i].shape()) +
                                   ", architecture needs " + shape_string(reference.parameters()[i].shape()));
      }
    }
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": invalid model spec: " + e.what());
  }
  return ckpt;
}

}  // namespace driveflow
