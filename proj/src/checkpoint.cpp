#include "sll/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sll::checkpoint {

namespace {
constexpr char kMagic[9] = "SLLTNSR1";

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};
}  // namespace

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  uint64_t h = seed;
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(buf.data(), buf.size());
}

const TensorEntry& Container::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IoError("checkpoint is missing tensor '" + name + "'");
}

bool Container::contains(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void write_container(const std::string& path, const Container& c) {
  std::string buf;
  buf.append(kMagic, 8);
  put_u32(buf, 1);  // version
  const std::string meta = c.meta.dump();
  put_u64(buf, meta.size());
  buf += meta;
  put_u32(buf, static_cast<uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    put_u32(buf, static_cast<uint32_t>(t.name.size()));
    buf += t.name;
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u64(buf, static_cast<uint64_t>(d));
    if (numel(t.shape) != static_cast<int64_t>(t.data.size())) {
      throw DimensionError("write_container: tensor '" + t.name + "' shape/data mismatch");
    }
    for (double d : t.data) put_f64(buf, d);
  }
  put_u64(buf, fnv1a(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 4 + 8 + 8) throw IoError("checkpoint too small: " + path);

  const uint64_t stored = fnv1a(buf.data(), buf.size() - 8);
  Reader tail{buf, buf.size() - 8};
  if (tail.u64() != stored) throw IoError("checkpoint checksum mismatch: " + path);

  Reader r{buf, 0};
  if (r.bytes(8) != std::string(kMagic, 8)) throw IoError("bad checkpoint magic: " + path);
  const uint32_t version = r.u32();
  if (version != 1) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  Container c;
  const uint64_t meta_len = r.u64();
  const std::string meta = r.bytes(meta_len);
  try {
    c.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint metadata parse failure: " + std::string(e.what()));
  }
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    TensorEntry t;
    t.name = r.bytes(r.u32());
    const uint32_t ndim = r.u32();
    for (uint32_t j = 0; j < ndim; ++j) t.shape.push_back(static_cast<int64_t>(r.u64()));
    const int64_t n = numel(t.shape);
    t.data.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) t.data[static_cast<size_t>(j)] = r.f64();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save_backbone(const std::string& path, const Backbone& backbone, const Vocab& vocab) {
  Container c;
  c.meta["kind"] = "backbone";
  c.meta["config"] = {{"vocab", backbone.cfg.vocab},       {"d", backbone.cfg.d},
                      {"heads", backbone.cfg.heads},       {"ff", backbone.cfg.ff},
                      {"enc_layers", backbone.cfg.enc_layers}, {"dec_layers", backbone.cfg.dec_layers},
                      {"bottleneck", backbone.cfg.bottleneck}, {"max_len", backbone.cfg.max_len}};
  c.meta["words"] = vocab.words();
  for (const auto& [name, t] : backbone.named_parameters()) {
    c.tensors.push_back({name, t.shape(), t.values()});
  }
  write_container(path, c);
}

std::pair<Backbone, Vocab> load_backbone(const std::string& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "backbone") throw IoError(path + " is not a backbone fixture");
  ModelConfig cfg;
  const auto& j = c.meta.at("config");
  cfg.vocab = j.at("vocab").get<int64_t>();
  cfg.d = j.at("d").get<int64_t>();
  cfg.heads = j.at("heads").get<int64_t>();
  cfg.ff = j.at("ff").get<int64_t>();
  cfg.enc_layers = j.at("enc_layers").get<int64_t>();
  cfg.dec_layers = j.at("dec_layers").get<int64_t>();
  cfg.bottleneck = j.at("bottleneck").get<int64_t>();
  cfg.max_len = j.at("max_len").get<int64_t>();

  Vocab vocab = Vocab::from_words(c.meta.at("words").get<std::vector<std::string>>());
  RngStream scratch(0);
  Backbone b = Backbone::init(cfg, scratch);
  load_named_values(c, b.named_parameters());
  b.set_trainable(false);
  return {std::move(b), std::move(vocab)};
}

void load_named_values(const Container& c,
                       const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& [name, t] : params) {
    const TensorEntry& e = c.find(name);
    if (e.shape != t.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(e.shape) +
                           ", expected " + shape_str(t.shape()));
    }
    Tensor tt = t;
    tt.mutable_values() = e.data;
  }
}

}  // namespace sll::checkpoint
