#include "racdnn_cli/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "racdnn/error.h"

namespace racdnn::cli {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'A', 'C', 'D'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw Error(ErrorKind::kCheckpoint, std::string("checkpoint truncated while reading ") + what);
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string optim_name(const std::string& prefix, const char* slot, const std::string& param) {
  return prefix + "/" + slot + "/" + param;
}

}  // namespace

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& r : records) {
    if (r.name.starts_with(prefix + "/")) return true;
  }
  return false;
}

void Checkpoint::put(std::string name, const Tensor& tensor) {
  records.push_back({std::move(name), tensor.shape(), {tensor.data().begin(), tensor.data().end()}});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(checkpoint.records.size());
  for (const auto& r : checkpoint.records) {
    if (shape_numel(r.shape) != r.values.size()) {
      throw Error(ErrorKind::kCheckpoint, "record '" + r.name + "' has inconsistent shape");
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.name.size()));
    w.put_bytes(r.name.data(), r.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.shape.size()));
    for (const std::size_t d : r.shape) w.put<std::uint64_t>(d);
    for (const double v : r.values) w.put<double>(v);
  }
  const std::string config = checkpoint.config.dump();
  w.put<std::uint64_t>(config.size());
  w.put_bytes(config.data(), config.size());
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof kMagic, "magic"), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorKind::kCheckpoint, "not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kCheckpoint, "unsupported checkpoint version " + std::to_string(version) +
                                            " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint out;
  const auto count = r.get<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const auto name_len = r.get<std::uint32_t>("name length");
    const auto* name = r.take(name_len, "name");
    rec.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto rank = r.get<std::uint32_t>("rank");
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0 || d > (std::uint64_t{1} << 32) || numel > (std::size_t{1} << 32) / d) {
        throw Error(ErrorKind::kCheckpoint, "record '" + rec.name + "' has an implausible shape");
      }
      rec.shape.push_back(static_cast<std::size_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    rec.values.resize(numel);
    std::memcpy(rec.values.data(), r.take(numel * sizeof(double), "values"), numel * sizeof(double));
    out.records.push_back(std::move(rec));
  }
  const auto config_len = r.get<std::uint64_t>("config length");
  const auto* config = r.take(config_len, "config");
  if (!r.done()) throw Error(ErrorKind::kCheckpoint, "trailing bytes after checkpoint");
  try {
    out.config = nlohmann::json::parse(config, config + config_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpoint, std::string("bad checkpoint config: ") + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void store_parameters(Checkpoint& checkpoint, const std::string& prefix, const ParamList& params) {
  for (const auto& p : params) checkpoint.put(prefix + "/" + p.name, p.tensor);
}

void restore_parameters(const Checkpoint& checkpoint, const std::string& prefix, ParamList& params) {
  for (auto& p : params) {
    const std::string name = prefix + "/" + p.name;
    const CheckpointRecord* rec = checkpoint.find(name);
    if (rec == nullptr) throw Error(ErrorKind::kCheckpoint, "checkpoint lacks tensor '" + name + "'");
    if (rec->shape != p.tensor.shape()) {
      throw Error(ErrorKind::kCheckpoint, "tensor '" + name + "' has shape " + shape_str(rec->shape) +
                                              ", model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(rec->values.begin(), rec->values.end(), dst.begin());
  }
}

void store_optimizer(Checkpoint& checkpoint, const std::string& prefix, const ParamList& params,
                     const OptimState& state, const PlateauSchedule& schedule) {
  std::size_t i = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (i < state.first.size()) {
      checkpoint.put(optim_name(prefix, "first", p.name), Tensor::from(p.tensor.shape(), state.first[i]));
    }
    if (i < state.second.size()) {
      checkpoint.put(optim_name(prefix, "second", p.name), Tensor::from(p.tensor.shape(), state.second[i]));
    }
    ++i;
  }
  checkpoint.put(prefix + "/step", Tensor::scalar(static_cast<double>(state.step)));
  checkpoint.put(prefix + "/lr", Tensor::scalar(state.lr));
  checkpoint.put(prefix + "/plateau",
                 Tensor::from({3}, {schedule.has_best ? 1.0 : 0.0, schedule.best, static_cast<double>(schedule.bad_epochs)}));
}

void restore_optimizer(const Checkpoint& checkpoint, const std::string& prefix, const ParamList& params,
                       OptimState& state, PlateauSchedule& schedule) {
  auto need = [&](const std::string& name, const Shape& shape) -> const CheckpointRecord& {
    const CheckpointRecord* rec = checkpoint.find(name);
    if (rec == nullptr) throw Error(ErrorKind::kCheckpoint, "checkpoint lacks '" + name + "'");
    if (rec->shape != shape) throw Error(ErrorKind::kCheckpoint, "'" + name + "' has shape " + shape_str(rec->shape));
    return *rec;
  };
  std::size_t i = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (i < state.first.size()) state.first[i] = need(optim_name(prefix, "first", p.name), p.tensor.shape()).values;
    if (i < state.second.size()) state.second[i] = need(optim_name(prefix, "second", p.name), p.tensor.shape()).values;
    ++i;
  }
  state.step = static_cast<std::uint64_t>(need(prefix + "/step", {1}).values[0]);
  state.lr = need(prefix + "/lr", {1}).values[0];
  const auto& plateau = need(prefix + "/plateau", {3}).values;
  schedule.has_best = plateau[0] != 0.0;
  schedule.best = plateau[1];
  schedule.bad_epochs = static_cast<int>(plateau[2]);
}

}  // namespace racdnn::cli
