#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reef/common.hpp"

namespace reef::diff {

class DiffParseError : public ParseError {
 public:
  using ParseError::ParseError;
};

enum class Marker { Context, Added, Deleted };

struct DiffLine {
  Marker marker = Marker::Context;
  std::string text;
  // Followed by a `\ No newline at end of file` note.
  bool no_newline_at_eof = false;

  bool operator==(const DiffLine&) const = default;
};

struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_len = 0;
  std::size_t new_start = 0;
  std::size_t new_len = 0;
  // Header written as `-a` / `+c` without an explicit `,1`.
  bool old_len_implicit = false;
  bool new_len_implicit = false;
  std::string header_context;
  std::vector<DiffLine> lines;

  bool operator==(const Hunk&) const = default;
};

struct FileDiff {
  std::string old_path;
  std::string new_path;
  // Lines before the first hunk (`diff --git`, `index`, `---`, `+++`, mode lines).
  std::vector<std::string> preamble;
  std::vector<Hunk> hunks;
  bool trailing_newline = false;

  // Path the diff applies to: new_path unless the file was removed.
  const std::string& path() const noexcept;
  bool operator==(const FileDiff&) const = default;
};

struct BugLocation {
  std::string path;
  std::size_t start = 1;
  std::size_t length = 0;
  std::size_t hunk_index = 0;

  // Last old-file line covered; a zero-length range anchors on `start`.
  std::size_t end() const noexcept { return length == 0 ? start : start + length - 1; }
  bool operator==(const BugLocation&) const = default;
};

// Parses a per-file unified-diff fragment as delivered by commit payloads.
// Paths default to `path` unless `---`/`+++` preamble lines override them.
FileDiff parse_unified_diff(std::string_view text, std::string_view path = {});

// Inverse of parse_unified_diff; byte-identical for fragments it accepted.
std::string serialize(const FileDiff& diff);

Language detect_language(std::string_view path, std::span<const std::string> sibling_paths = {});

// Added plus deleted lines.
std::size_t changed_loc(const FileDiff& diff) noexcept;

std::vector<BugLocation> extract_locations(const FileDiff& diff);
std::vector<BugLocation> extract_locations(std::span<const FileDiff> diffs);

// Approximate function-unit count: distinct signatures in hunk headers and
// context/added lines, falling back to the hunk count when none match.
std::size_t count_functions(const FileDiff& diff, Language language);

// Names of signatures matched on a single line (empty if none).
std::vector<std::string> match_signatures(std::string_view line, Language language);

}  // namespace reef::diff
