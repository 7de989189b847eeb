#include "reef/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace reef {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::optional<int> to_int(std::string_view s) {
  if (!all_digits(s) || s.size() > 9) return std::nullopt;
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

}  // namespace

std::string_view language_name(Language lang) noexcept {
  switch (lang) {
    case Language::Cpp: return "C++";
    case Language::C: return "C";
    case Language::Java: return "Java";
    case Language::Python: return "Python";
    case Language::JS: return "JS";
    case Language::Go: return "Go";
    case Language::CSharp: return "C#";
    case Language::Unknown: break;
  }
  return "unknown";
}

std::optional<Language> language_from_name(std::string_view name) noexcept {
  for (Language l : kRecognizedLanguages)
    if (language_name(l) == name) return l;
  return std::nullopt;
}

bool is_valid_cve_id(std::string_view id) noexcept {
  if (id.size() < 13 || id.substr(0, 4) != "CVE-" || id[8] != '-') return false;
  return all_digits(id.substr(4, 4)) && all_digits(id.substr(9)) && id.size() - 9 >= 4;
}

std::optional<int> cve_year(std::string_view id) noexcept {
  if (!is_valid_cve_id(id)) return std::nullopt;
  return to_int(id.substr(4, 4));
}

std::optional<int> cwe_number(std::string_view cwe) noexcept {
  if (cwe.substr(0, 4) != "CWE-") return std::nullopt;
  return to_int(cwe.substr(4));
}

bool is_countable_cwe(std::string_view cwe) noexcept { return cwe_number(cwe).has_value(); }

bool is_pseudo_cwe(std::string_view cwe) noexcept { return cwe.substr(0, 8) == "NVD-CWE-"; }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string_view trim(std::string_view s) noexcept {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) noexcept {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

std::size_t utf8_length(std::string_view s) noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t width = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    if (i + width > s.size()) width = 1;
    for (std::size_t k = 1; k < width; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) {
        width = 1;
        break;
      }
    i += width;
    ++n;
  }
  return n;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  auto tmp = target;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "." +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace reef
