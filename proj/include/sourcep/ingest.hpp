#pragma once

#include "sourcep/error.hpp"
#include "sourcep/record.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace sourcep::ingest {

class IngestError : public Error {
public:
  enum class Kind { BadAddress, NotVerified, RateLimited, NetworkError, Cache };
  IngestError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

inline constexpr const char* kApiKeyEnv = "ETHERSCAN_API_KEY";

struct ApiConfig {
  std::string base_url = "https://api.etherscan.io";
  std::string endpoint = "/api";
  std::string api_key;  // never written to logs or error messages
  std::chrono::milliseconds timeout{10000};
  std::chrono::milliseconds delay{200};    // minimum spacing between requests
  std::chrono::milliseconds backoff{1000};  // first rate-limit wait, doubled per retry
  int max_retries = 3;
  std::optional<std::filesystem::path> cache_dir;

  /// Defaults with the key taken from ETHERSCAN_API_KEY when set.
  static ApiConfig from_env();
};

/// "0x" followed by 40 hex digits, either case.
bool valid_address(std::string_view address);

/// The SourceCode field of a response as one text. Multi-file submissions
/// ("{{...}}" standard-json input or a bare {"file": {"content": ...}} map)
/// are joined in file order, each preceded by a "// File: name" line.
std::string join_sources(std::string_view source_code);

/// Client for the verified-source endpoint. One request in flight at a time;
/// concurrent callers queue on an internal lock.
class SourceClient {
public:
  explicit SourceClient(ApiConfig config);

  /// Source of a verified contract as an unlabeled record with index `idx`.
  /// Served from the cache directory when present there.
  ContractRecord fetch(std::string_view address, std::int64_t idx = 0);

  /// HTTP requests issued so far (cache hits excluded).
  std::size_t requests() const noexcept { return requests_; }

private:
  std::string request(std::string_view address);
  std::optional<std::filesystem::path> cache_path(std::string_view address) const;
  void pace();

  ApiConfig config_;
  std::mutex mutex_;
  std::optional<std::chrono::steady_clock::time_point> last_;
  std::size_t requests_ = 0;
};

/// One-off fetch with a fresh client.
ContractRecord fetch_verified_source(std::string_view address, const ApiConfig& config,
                                     std::int64_t idx = 0);

}  // namespace sourcep::ingest
