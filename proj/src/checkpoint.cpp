#include "sourcep/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sourcep {

namespace {

constexpr std::string_view kMagic = "SRCPCKPT";

template <class T>
void put(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out += static_cast<char>((value >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

void put_text(std::string& out, std::string_view s) {
  put(out, static_cast<std::uint64_t>(s.size()));
  out += s;
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw CheckpointError(CheckpointError::Kind::Corrupt, "bad value for " + key + ": " + value);
  return v;
}

}  // namespace

std::string config_to_text(const encoder::ModelConfig& c) {
  std::ostringstream out;
  out << "layers=" << c.layers << "\n"
      << "hidden=" << c.hidden << "\n"
      << "heads=" << c.heads << "\n"
      << "ffn=" << c.ffn << "\n"
      << "code_len=" << c.code_len << "\n"
      << "flow_len=" << c.flow_len << "\n"
      << "seed=" << c.seed << "\n"
      << "use_dataflow=" << (c.use_dataflow ? 1 : 0) << "\n";
  return out.str();
}

encoder::ModelConfig config_from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CheckpointError(CheckpointError::Kind::Corrupt, "bad config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  encoder::ModelConfig c;
  auto field = [&](const char* key) -> std::size_t {
    auto it = kv.find(key);
    if (it == kv.end())
      throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("config lacks ") + key);
    return parse_size(key, it->second);
  };
  c.layers = field("layers");
  c.hidden = field("hidden");
  c.heads = field("heads");
  c.ffn = field("ffn");
  c.code_len = field("code_len");
  c.flow_len = field("flow_len");
  c.seed = field("seed");
  c.use_dataflow = field("use_dataflow") != 0;
  return c;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  put(out, kCheckpointVersion);
  put_text(out, config_to_text(config));
  put_text(out, vocab.to_lines());
  const auto tensors = params.tensors();
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint64_t>(m->rows()));
    put(out, static_cast<std::uint64_t>(m->cols()));
    for (Eigen::Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic)
    throw CheckpointError(CheckpointError::Kind::BadMagic, "not a checkpoint file");
  Reader r(bytes.substr(kMagic.size()));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = config_from_text(r.take(r.get<std::uint64_t>()));
  try {
    ck.vocab = tokenize::Vocabulary::from_lines(r.take(r.get<std::uint64_t>()));
  } catch (const tokenize::VocabError& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, e.what());
  }
  // shape the parameter set from the config, then fill it by name
  try {
    ck.params = encoder::init_params(ck.config, ck.vocab.size());
  } catch (const encoder::EncoderError& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, e.what());
  }
  auto tensors = ck.params.tensors();
  const auto count = r.get<std::uint32_t>();
  if (count != tensors.size())
    throw CheckpointError(CheckpointError::Kind::Corrupt, "tensor count does not match config");
  for (auto& [expected, m] : tensors) {
    const auto name = r.take(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (name != expected || rows != static_cast<std::uint64_t>(m->rows()) ||
        cols != static_cast<std::uint64_t>(m->cols()))
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "unexpected tensor " + std::string(name) + " (wanted " + expected + ")");
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = r.get_f64();
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::Corrupt, "trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace sourcep
