#include "sourcep/ingest.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace sourcep::ingest {

using ordered_json = nlohmann::ordered_json;

ApiConfig ApiConfig::from_env() {
  ApiConfig c;
  if (const char* key = std::getenv(kApiKeyEnv)) c.api_key = key;
  return c;
}

bool valid_address(std::string_view a) {
  if (a.size() != 42 || a[0] != '0' || (a[1] != 'x' && a[1] != 'X')) return false;
  return std::all_of(a.begin() + 2, a.end(),
                     [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool mentions_rate_limit(const ordered_json& j) {
  for (const char* field : {"result", "message"})
    if (j.contains(field) && j[field].is_string() &&
        lower(j[field].get<std::string>()).find("rate limit") != std::string::npos)
      return true;
  return false;
}

// A rate-limit signal that the caller may retry.
struct Throttled {};

}  // namespace

std::string join_sources(std::string_view code) {
  std::string_view body = code;
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
  if (body.size() < 2 || body.front() != '{') return std::string(code);
  // standard-json input arrives wrapped in a second pair of braces
  if (body.size() >= 4 && body.starts_with("{{") && body.ends_with("}}"))
    body = body.substr(1, body.size() - 2);
  ordered_json j = ordered_json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string(code);
  const ordered_json& files = j.contains("sources") && j["sources"].is_object() ? j["sources"] : j;
  std::string out;
  for (const auto& [name, file] : files.items()) {
    if (!file.is_object() || !file.contains("content") || !file["content"].is_string())
      return std::string(code);
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "// File: " + name + "\n";
    out += file["content"].get<std::string>();
  }
  return out.empty() ? std::string(code) : out;
}

SourceClient::SourceClient(ApiConfig config) : config_(std::move(config)) {}

std::optional<std::filesystem::path> SourceClient::cache_path(std::string_view address) const {
  if (!config_.cache_dir) return std::nullopt;
  return *config_.cache_dir / (lower(address) + ".sol");
}

void SourceClient::pace() {
  const auto now = std::chrono::steady_clock::now();
  if (last_ && now < *last_ + config_.delay) std::this_thread::sleep_until(*last_ + config_.delay);
  last_ = std::chrono::steady_clock::now();
}

std::string SourceClient::request(std::string_view address) {
  pace();
  ++requests_;
  httplib::Client client(config_.base_url);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  httplib::Params params{{"module", "contract"},
                         {"action", "getsourcecode"},
                         {"address", std::string(address)}};
  if (!config_.api_key.empty()) params.emplace("apikey", config_.api_key);
  auto res = client.Get(config_.endpoint, params, httplib::Headers{});
  if (!res)
    throw IngestError(IngestError::Kind::NetworkError,
                      "request for " + std::string(address) + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429) throw Throttled{};
  if (res->status != 200)
    throw IngestError(IngestError::Kind::NetworkError,
                      "HTTP " + std::to_string(res->status) + " for " + std::string(address));
  const auto j = ordered_json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw IngestError(IngestError::Kind::NetworkError, "malformed response for " + std::string(address));
  if (mentions_rate_limit(j)) throw Throttled{};
  if (j.value("status", "") != "1" || !j.contains("result") || !j["result"].is_array() ||
      j["result"].empty()) {
    std::string why = j.contains("result") && j["result"].is_string() ? j["result"].get<std::string>()
                                                                      : j.value("message", "");
    throw IngestError(IngestError::Kind::NetworkError,
                      "API error for " + std::string(address) + (why.empty() ? "" : ": " + why));
  }
  const auto& entry = j["result"][0];
  const std::string code = entry.contains("SourceCode") && entry["SourceCode"].is_string()
                               ? entry["SourceCode"].get<std::string>()
                               : std::string();
  if (code.empty())
    throw IngestError(IngestError::Kind::NotVerified, std::string(address) + " has no verified source");
  return join_sources(code);
}

ContractRecord SourceClient::fetch(std::string_view address, std::int64_t idx) {
  if (!valid_address(address))
    throw IngestError(IngestError::Kind::BadAddress, "not a contract address: " + std::string(address));
  std::lock_guard lock(mutex_);
  const auto cached = cache_path(address);
  if (cached && std::filesystem::exists(*cached)) {
    std::ifstream in(*cached, std::ios::binary);
    if (!in) throw IngestError(IngestError::Kind::Cache, "cannot read " + cached->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return {idx, buf.str(), std::nullopt};
  }
  std::string source;
  for (int attempt = 0;; ++attempt) {
    try {
      source = request(address);
      break;
    } catch (const Throttled&) {
      if (attempt >= config_.max_retries)
        throw IngestError(IngestError::Kind::RateLimited,
                          "rate limited after " + std::to_string(attempt + 1) + " attempts");
      std::this_thread::sleep_for(config_.backoff * (1 << attempt));
    }
  }
  if (cached) {
    std::error_code ec;
    std::filesystem::create_directories(cached->parent_path(), ec);
    const auto tmp = cached->string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << source;
      if (!out) throw IngestError(IngestError::Kind::Cache, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, *cached, ec);
    if (ec) throw IngestError(IngestError::Kind::Cache, "cannot write " + cached->string());
  }
  return {idx, std::move(source), std::nullopt};
}

ContractRecord fetch_verified_source(std::string_view address, const ApiConfig& config,
                                     std::int64_t idx) {
  SourceClient client(config);
  return client.fetch(address, idx);
}

}  // namespace sourcep::ingest
