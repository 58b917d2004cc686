#include "vrae/checkpoint.hpp"

#include "vrae/json_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vrae {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint at byte " + std::to_string(pos_));
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

Shape shape_from_dims(const std::vector<std::uint64_t>& dims) {
  if (dims.size() == 1) return {dims[0], 1, 1, 1};
  if (dims.size() == 4) return {dims[0], dims[1], dims[2], dims[3]};
  throw CheckpointError("unsupported tensor rank " + std::to_string(dims.size()));
}

}  // namespace

Checkpoint Checkpoint::capture(Network& net, const AdamState* optimizer, std::uint64_t seed,
                               const data::DegradationConfig& degradation) {
  Checkpoint c;
  c.config = net.config();
  c.degradation = degradation;
  c.seed = seed;
  const auto params = net.parameters();
  for (const auto& np : params) c.entries.push_back({np.name, np.param->rank, np.param->value});
  for (const auto& b : net.buffers()) c.entries.push_back({b.name, 1, *b.value});
  if (optimizer != nullptr) {
    c.has_optimizer = true;
    c.step = optimizer->step;
    c.adam = optimizer->hyper;
    for (const char* kind : {"m", "v"}) {
      const auto& moments = kind[0] == 'm' ? optimizer->first_moment : optimizer->second_moment;
      for (const auto& np : params) {
        auto it = moments.find(np.name);
        Tensor4 value = it != moments.end() ? it->second : Tensor4(np.param->value.shape());
        c.entries.push_back({std::string("adam.") + kind + "." + np.name, np.param->rank, std::move(value)});
      }
    }
  }
  return c;
}

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

Network Checkpoint::restore() const {
  Network net(config);
  auto copy = [this](const std::string& name, Tensor4& dst) {
    const auto* e = find(name);
    if (e == nullptr) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (e->value.shape() != dst.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + e->value.shape().str() + ", network expects " +
                            dst.shape().str());
    }
    dst = e->value;
  };
  for (auto& np : net.parameters()) copy(np.name, np.param->value);
  for (auto& b : net.buffers()) copy(b.name, *b.value);
  return net;
}

AdamState Checkpoint::restore_optimizer() const {
  AdamState s;
  s.hyper = adam;
  if (!has_optimizer) return s;
  s.step = step;
  for (const auto& e : entries) {
    if (e.name.starts_with("adam.m.")) s.first_moment[e.name.substr(7)] = e.value;
    if (e.name.starts_with("adam.v.")) s.second_moment[e.name.substr(7)] = e.value;
  }
  return s;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  nlohmann::json header{{"config", to_json(config)},
                        {"degradation", to_json(degradation)},
                        {"seed", seed},
                        {"step", step},
                        {"adam", to_json(adam)},
                        {"has_optimizer", has_optimizer}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'V', 'R', 'A', 'E'};
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    const Shape s = e.value.shape();
    if (e.rank == 1) {
      out.push_back(1);
      put_le<std::uint64_t>(out, s.size());
    } else {
      out.push_back(4);
      for (auto d : {s.n, s.c, s.h, s.w}) put_le<std::uint64_t>(out, d);
    }
    for (float v : e.value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "VRAE") throw CheckpointError("not a VRAE checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                          std::to_string(kVersion) + ")");
  }
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(r.str(r.le<std::uint32_t>()));
    c.config = vrae_config_from_json(header.at("config"));
    c.degradation = degradation_from_json(header.at("degradation"));
    c.seed = header.at("seed").get<std::uint64_t>();
    c.step = header.at("step").get<std::uint64_t>();
    c.adam = adam_from_json(header.at("adam"));
    c.has_optimizer = header.at("has_optimizer").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str(r.le<std::uint32_t>());
    e.rank = r.le<std::uint8_t>();
    std::vector<std::uint64_t> dims(static_cast<std::size_t>(e.rank));
    for (auto& d : dims) d = r.le<std::uint64_t>();
    const Shape shape = shape_from_dims(dims);
    std::vector<float> values(shape.size());
    for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>());
    e.value = Tensor4(shape, std::move(values));
    c.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace vrae
