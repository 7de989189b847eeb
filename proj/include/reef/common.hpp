#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace reef {

// Errors. Every failure the pipeline can surface derives from reef::Error so
// stage drivers can map them to exit codes in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, bool retriable = true)
      : Error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

// Source languages of the dataset partition, in the canonical table order.
// The order doubles as the tie-break used for case attribution.
enum class Language { Cpp, C, Java, Python, JS, Go, CSharp, Unknown };

inline constexpr std::array<Language, 7> kRecognizedLanguages = {
    Language::Cpp, Language::C, Language::Java, Language::Python,
    Language::JS,  Language::Go, Language::CSharp};

std::string_view language_name(Language lang) noexcept;
std::optional<Language> language_from_name(std::string_view name) noexcept;
inline bool is_recognized(Language lang) noexcept { return lang != Language::Unknown; }

// `CVE-<4-digit year>-<4+ digits>`.
bool is_valid_cve_id(std::string_view id) noexcept;
std::optional<int> cve_year(std::string_view id) noexcept;

// "CWE-<n>" only; pseudo identifiers such as NVD-CWE-noinfo are not countable.
bool is_countable_cwe(std::string_view cwe) noexcept;
bool is_pseudo_cwe(std::string_view cwe) noexcept;
std::optional<int> cwe_number(std::string_view cwe) noexcept;

std::string sha256_hex(std::string_view data);

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix) noexcept;

// Number of code points in a UTF-8 string; invalid bytes count as one each.
std::size_t utf8_length(std::string_view s) noexcept;

std::string read_file(const std::string& path);
// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace reef
