#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace reef {

struct CacheEntry {
  std::string url;
  int status = 200;
  std::string payload;
  std::string fetched_at;
};

// Content-addressed response cache: one file per request under
// `<root>/<key[0..1]>/<key>.json`, key = sha256 of the normalized URL.
// Fixture directories use the same layout and are consulted read-only after
// the writable root. Entries never expire.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root, std::vector<std::filesystem::path> fixture_layers = {});

  static std::string normalize_url(const std::string& url);
  static std::string key_for(const std::string& url);
  static std::filesystem::path relative_path_for(const std::string& url);

  std::optional<CacheEntry> lookup(const std::string& url) const;
  // Writers are serialized per key; readers never observe partial files.
  void store(const CacheEntry& entry);

  static std::string encode(const CacheEntry& entry);
  static CacheEntry decode(const std::string& text, const std::string& origin);

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::filesystem::path> layers_;
  mutable std::array<std::mutex, 32> stripes_;
};

}  // namespace reef
