#include "reef/cache.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>

#include "reef/common.hpp"

namespace reef {

namespace fs = std::filesystem;

ResponseCache::ResponseCache(fs::path root, std::vector<fs::path> fixture_layers)
    : root_(std::move(root)), layers_(std::move(fixture_layers)) {}

std::string ResponseCache::normalize_url(const std::string& url) {
  std::string u = url;
  if (auto hash = u.find('#'); hash != std::string::npos) u.erase(hash);
  auto scheme_end = u.find("://");
  if (scheme_end == std::string::npos) return u;
  auto host_end = u.find('/', scheme_end + 3);
  auto head = to_lower(u.substr(0, host_end));
  std::string tail = host_end == std::string::npos ? "/" : u.substr(host_end);
  while (tail.size() > 1 && tail.back() == '/') tail.pop_back();
  return head + tail;
}

std::string ResponseCache::key_for(const std::string& url) { return sha256_hex(normalize_url(url)); }

fs::path ResponseCache::relative_path_for(const std::string& url) {
  auto key = key_for(url);
  return fs::path(key.substr(0, 2)) / (key + ".json");
}

std::string ResponseCache::encode(const CacheEntry& entry) {
  nlohmann::ordered_json j;
  j["url"] = normalize_url(entry.url);
  j["status"] = entry.status;
  j["fetched_at"] = entry.fetched_at;
  j["payload"] = entry.payload;
  return j.dump(1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

CacheEntry ResponseCache::decode(const std::string& text, const std::string& origin) {
  try {
    auto j = nlohmann::json::parse(text);
    CacheEntry e;
    e.url = j.at("url").get<std::string>();
    e.status = j.value("status", 200);
    e.fetched_at = j.value("fetched_at", std::string{});
    e.payload = j.at("payload").get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("corrupt cache entry " + origin + ": " + ex.what());
  }
}

std::optional<CacheEntry> ResponseCache::lookup(const std::string& url) const {
  auto rel = relative_path_for(url);
  auto try_dir = [&](const fs::path& dir) -> std::optional<CacheEntry> {
    auto p = dir / rel;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    return decode(read_file(p.string()), p.string());
  };
  if (!root_.empty())
    if (auto e = try_dir(root_)) return e;
  for (const auto& layer : layers_)
    if (auto e = try_dir(layer)) return e;
  return std::nullopt;
}

void ResponseCache::store(const CacheEntry& entry) {
  if (root_.empty()) return;
  auto key = key_for(entry.url);
  std::lock_guard lock(stripes_[std::stoul(key.substr(0, 2), nullptr, 16) % stripes_.size()]);
  CacheEntry stamped = entry;
  if (stamped.fetched_at.empty()) {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    stamped.fetched_at = buf;
  }
  write_file_atomic((root_ / relative_path_for(entry.url)).string(), encode(stamped));
}

}  // namespace reef
