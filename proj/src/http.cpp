#include "reef/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

namespace reef::http {

Url parse_url(const std::string& url) {
  Url u;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("not an absolute URL: " + url);
  u.scheme = to_lower(url.substr(0, scheme_end));
  if (u.scheme != "http" && u.scheme != "https") throw ConfigError("unsupported URL scheme: " + url);
  auto rest = url.substr(scheme_end + 3);
  auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  u.path = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    u.host = authority.substr(0, colon);
    u.port = std::stoi(authority.substr(colon + 1));
  } else {
    u.host = authority;
    u.port = u.scheme == "https" ? 443 : 80;
  }
  if (u.host.empty()) throw ConfigError("URL without host: " + url);
  return u;
}

NetworkTransport::NetworkTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

Response NetworkTransport::send(const Request& request) {
  auto u = parse_url(request.url);
  httplib::Client client(u.scheme + "://" + u.host + ":" + std::to_string(u.port));
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_follow_location(true);
  httplib::Headers headers(request.headers.begin(), request.headers.end());

  httplib::Result res = request.method == "POST"
                            ? client.Post(u.path, headers, request.body,
                                          request.content_type.empty() ? "application/json" : request.content_type)
                            : client.Get(u.path, headers);
  if (!res) throw TransportError("request to " + request.url + " failed: " + httplib::to_string(res.error()));
  Response out;
  out.status = res->status;
  out.body = res->body;
  for (const auto& [k, v] : res->headers) out.headers[to_lower(k)] = v;
  return out;
}

Response NetworkGuard::send(const Request& request) {
  ++attempts_;
  throw NetworkAccessDenied(request.url);
}

RateLimiter::RateLimiter(double tokens_per_second, double burst)
    : rate_(tokens_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(Clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  std::unique_lock lock(mu_);
  while (true) {
    auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

}  // namespace reef::http
