#pragma once

#include "sourcep/encoder.hpp"
#include "sourcep/error.hpp"
#include "sourcep/tokenize.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace sourcep {

class CheckpointError : public Error {
public:
  enum class Kind { Io, BadMagic, BadVersion, Corrupt };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// Model configuration, vocabulary and parameters in one file.
///
/// Layout (little-endian): "SRCPCKPT", u32 version, then u64-length-prefixed
/// config text (key=value lines) and vocabulary text (id<TAB>token lines),
/// u32 tensor count, and per tensor: u32-length-prefixed name, u64 rows,
/// u64 cols, rows*cols f64 in row-major order.
struct Checkpoint {
  encoder::ModelConfig config;
  tokenize::Vocabulary vocab;
  encoder::EncoderParams params;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// key=value lines for a model configuration, and back.
std::string config_to_text(const encoder::ModelConfig& config);
encoder::ModelConfig config_from_text(std::string_view text);

}  // namespace sourcep
