#include "reef/diffmodel.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>
#include <tuple>

namespace reef::diff {

namespace {

constexpr std::string_view kNoNewlineNote = "\\ No newline at end of file";

constexpr std::string_view kPreamblePrefixes[] = {
    "diff ",          "index ",         "--- ",           "+++ ",      "new file mode",
    "deleted file mode", "old mode",    "new mode",       "similarity index",
    "dissimilarity index", "rename from", "rename to",    "copy from", "copy to",
    "Binary files "};

std::vector<std::string_view> split_lines(std::string_view text, bool& trailing_newline) {
  std::vector<std::string_view> lines;
  trailing_newline = !text.empty() && text.back() == '\n';
  if (trailing_newline) text.remove_suffix(1);
  if (text.empty() && !trailing_newline) return lines;
  std::size_t pos = 0;
  while (true) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

bool parse_number(std::string_view& s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr == s.data()) return false;
  s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
  return true;
}

bool consume(std::string_view& s, std::string_view token) {
  if (s.substr(0, token.size()) != token) return false;
  s.remove_prefix(token.size());
  return true;
}

// `-a[,b] +c[,d] @@[ ctx]` after the leading `@@ `.
bool parse_range(std::string_view& s, char sign, std::size_t& start, std::size_t& len, bool& implicit) {
  if (s.empty() || s.front() != sign) return false;
  s.remove_prefix(1);
  if (!parse_number(s, start)) return false;
  implicit = !consume(s, ",");
  if (implicit) {
    len = 1;
  } else if (!parse_number(s, len)) {
    return false;
  }
  return true;
}

Hunk parse_header(std::string_view line, std::size_t lineno) {
  Hunk h;
  std::string_view s = line;
  bool ok = consume(s, "@@ ") && parse_range(s, '-', h.old_start, h.old_len, h.old_len_implicit) &&
            consume(s, " ") && parse_range(s, '+', h.new_start, h.new_len, h.new_len_implicit) &&
            consume(s, " @@");
  if (!ok) throw DiffParseError("malformed hunk header: " + std::string(line), lineno);
  if (!s.empty()) {
    if (s.front() != ' ') throw DiffParseError("malformed hunk header: " + std::string(line), lineno);
    h.header_context = std::string(s.substr(1));
  }
  return h;
}

std::string strip_side_prefix(std::string_view p) {
  if (p.substr(0, 2) == "a/" || p.substr(0, 2) == "b/") p.remove_prefix(2);
  auto tab = p.find('\t');
  if (tab != std::string_view::npos) p = p.substr(0, tab);
  return std::string(p);
}

std::string lower_extension(std::string_view path) {
  auto slash = path.find_last_of('/');
  auto base = slash == std::string_view::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  if (dot == std::string_view::npos || dot == 0) return {};
  return to_lower(base.substr(dot));
}

bool is_cpp_extension(std::string_view ext) {
  return ext == ".cpp" || ext == ".cc" || ext == ".cxx" || ext == ".hpp" || ext == ".hh";
}

using KeywordSet = std::set<std::string, std::less<>>;

// Words that open a statement; a line starting with one is never a signature.
const KeywordSet& statement_keywords() {
  static const KeywordSet k = {"if",    "for",    "while", "switch", "return", "else",  "do",
                               "new",   "delete", "throw", "case",   "catch",  "await", "yield",
                               "using", "typeof", "sizeof", "lock",  "foreach", "with", "elif",
                               "assert", "goto"};
  return k;
}

const KeywordSet& reserved_names() {
  static const KeywordSet k = [] {
    KeywordSet s = statement_keywords();
    s.insert({"function", "defined", "class", "struct", "namespace", "decltype", "alignof",
              "static_assert", "synchronized", "operator"});
    return s;
  }();
  return k;
}

struct SignaturePattern {
  std::regex re;
  bool reject_statement_end;  // lines ending in ';' are calls or declarations
};

const std::vector<SignaturePattern>& patterns_for(Language lang) {
  using R = std::regex;
  constexpr auto flags = R::ECMAScript | R::optimize;
  static const std::vector<SignaturePattern> c_like = {
      {R(R"(^\s*(?:[A-Za-z_][\w:<>,\*&\s]*[\s\*&])([A-Za-z_~]\w*(?:::~?[A-Za-z_]\w*)*)\s*\()", flags), true},
      {R(R"(^\s*([A-Za-z_]\w*(?:::~?[A-Za-z_]\w*)+)\s*\()", flags), true}};
  static const std::vector<SignaturePattern> jvm_like = {
      {R(R"(^\s*(?:@\w+(?:\([^)]*\))?\s+)*(?:(?:public|private|protected|internal|static|final|abstract|synchronized|native|virtual|override|async|sealed|extern|unsafe|partial|default)\s+)*[\w<>\[\],\.\?]+\s+(\w+)\s*\()",
         flags),
       true},
      {R(R"(^\s*(?:public|private|protected|internal)\s+(\w+)\s*\()", flags), true}};
  static const std::vector<SignaturePattern> python = {
      {R(R"(^\s*(?:async\s+)?def\s+(\w+)\s*\()", flags), false}};
  static const std::vector<SignaturePattern> go = {
      {R(R"(^\s*func\s+(?:\([^)]*\)\s*)?(\w+)\s*[\[(])", flags), false}};
  static const std::vector<SignaturePattern> js = {
      {R(R"(\bfunction\s*\*?\s*([A-Za-z_$][\w$]*)\s*\()", flags), false},
      {R(R"(^\s*(?:export\s+)?(?:const|let|var)\s+([A-Za-z_$][\w$]*)\s*=\s*(?:async\s+)?(?:function\b|\([^)]*\)\s*=>|[A-Za-z_$][\w$]*\s*=>))",
         flags),
       false},
      {R(R"(^\s*(?:static\s+)?(?:async\s+)?([A-Za-z_$][\w$]*)\s*\([^)]*\)\s*\{)", flags), false}};
  static const std::vector<SignaturePattern> none;
  switch (lang) {
    case Language::C:
    case Language::Cpp: return c_like;
    case Language::Java:
    case Language::CSharp: return jvm_like;
    case Language::Python: return python;
    case Language::Go: return go;
    case Language::JS: return js;
    case Language::Unknown: break;
  }
  return none;
}

}  // namespace

const std::string& FileDiff::path() const noexcept {
  return (new_path.empty() || new_path == "/dev/null") ? old_path : new_path;
}

FileDiff parse_unified_diff(std::string_view text, std::string_view path) {
  FileDiff diff;
  diff.old_path = diff.new_path = std::string(path);
  auto lines = split_lines(text, diff.trailing_newline);

  std::size_t i = 0;
  for (; i < lines.size() && lines[i].substr(0, 2) != "@@"; ++i) {
    auto line = lines[i];
    bool known = line.empty() || std::any_of(std::begin(kPreamblePrefixes), std::end(kPreamblePrefixes),
                                             [&](std::string_view p) { return line.substr(0, p.size()) == p; });
    if (!known) throw DiffParseError("unexpected line before first hunk: " + std::string(line), i + 1);
    if (line.substr(0, 4) == "--- ") diff.old_path = strip_side_prefix(line.substr(4));
    if (line.substr(0, 4) == "+++ ") diff.new_path = strip_side_prefix(line.substr(4));
    diff.preamble.emplace_back(line);
  }

  while (i < lines.size()) {
    Hunk hunk = parse_header(lines[i], i + 1);
    ++i;
    std::size_t old_left = hunk.old_len;
    std::size_t new_left = hunk.new_len;
    while (i < lines.size()) {
      auto line = lines[i];
      if (!line.empty() && line.front() == '\\') {
        if (hunk.lines.empty() || hunk.lines.back().no_newline_at_eof)
          throw DiffParseError("misplaced end-of-file note", i + 1);
        hunk.lines.back().no_newline_at_eof = true;
        ++i;
        continue;
      }
      if (old_left == 0 && new_left == 0) {
        if (line.substr(0, 2) == "@@") break;
        throw DiffParseError("content beyond the counts declared by the hunk header", i + 1);
      }
      if (line.empty()) throw DiffParseError("line without a diff marker inside hunk", i + 1);
      DiffLine dl;
      dl.text = std::string(line.substr(1));
      switch (line.front()) {
        case ' ':
          if (old_left == 0 || new_left == 0) throw DiffParseError("context line exceeds hunk counts", i + 1);
          --old_left;
          --new_left;
          dl.marker = Marker::Context;
          break;
        case '+':
          if (new_left == 0) throw DiffParseError("added line exceeds new-file count", i + 1);
          --new_left;
          dl.marker = Marker::Added;
          break;
        case '-':
          if (old_left == 0) throw DiffParseError("deleted line exceeds old-file count", i + 1);
          --old_left;
          dl.marker = Marker::Deleted;
          break;
        default:
          throw DiffParseError("line without a diff marker inside hunk", i + 1);
      }
      hunk.lines.push_back(std::move(dl));
      ++i;
    }
    if (old_left != 0 || new_left != 0)
      throw DiffParseError("hunk ends before the counts declared by its header", i);
    diff.hunks.push_back(std::move(hunk));
  }
  return diff;
}

std::string serialize(const FileDiff& diff) {
  std::vector<std::string> out(diff.preamble.begin(), diff.preamble.end());
  for (const auto& h : diff.hunks) {
    std::string header = "@@ -" + std::to_string(h.old_start);
    if (!h.old_len_implicit) header += "," + std::to_string(h.old_len);
    header += " +" + std::to_string(h.new_start);
    if (!h.new_len_implicit) header += "," + std::to_string(h.new_len);
    header += " @@";
    if (!h.header_context.empty()) header += " " + h.header_context;
    out.push_back(std::move(header));
    for (const auto& l : h.lines) {
      char m = l.marker == Marker::Added ? '+' : l.marker == Marker::Deleted ? '-' : ' ';
      out.push_back(m + l.text);
      if (l.no_newline_at_eof) out.emplace_back(kNoNewlineNote);
    }
  }
  std::string text;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (k) text += '\n';
    text += out[k];
  }
  if (diff.trailing_newline) text += '\n';
  return text;
}

Language detect_language(std::string_view path, std::span<const std::string> sibling_paths) {
  auto ext = lower_extension(path);
  if (ext == ".c") return Language::C;
  if (is_cpp_extension(ext)) return Language::Cpp;
  if (ext == ".java") return Language::Java;
  if (ext == ".py") return Language::Python;
  if (ext == ".js" || ext == ".jsx" || ext == ".mjs") return Language::JS;
  if (ext == ".go") return Language::Go;
  if (ext == ".cs") return Language::CSharp;
  if (ext == ".h") {
    bool cpp_sibling = std::any_of(sibling_paths.begin(), sibling_paths.end(),
                                   [](const std::string& p) { return is_cpp_extension(lower_extension(p)); });
    return cpp_sibling ? Language::Cpp : Language::C;
  }
  return Language::Unknown;
}

std::size_t changed_loc(const FileDiff& diff) noexcept {
  std::size_t n = 0;
  for (const auto& h : diff.hunks)
    for (const auto& l : h.lines)
      if (l.marker != Marker::Context) ++n;
  return n;
}

std::vector<BugLocation> extract_locations(const FileDiff& diff) {
  return extract_locations(std::span<const FileDiff>(&diff, 1));
}

std::vector<BugLocation> extract_locations(std::span<const FileDiff> diffs) {
  std::vector<BugLocation> out;
  for (const auto& d : diffs)
    for (std::size_t k = 0; k < d.hunks.size(); ++k)
      out.push_back({d.path(), std::max<std::size_t>(1, d.hunks[k].old_start), d.hunks[k].old_len, k});
  std::stable_sort(out.begin(), out.end(), [](const BugLocation& a, const BugLocation& b) {
    return std::tie(a.path, a.start, a.hunk_index) < std::tie(b.path, b.start, b.hunk_index);
  });
  return out;
}

std::vector<std::string> match_signatures(std::string_view line, Language language) {
  std::vector<std::string> names;
  auto body = trim(line);
  if (body.empty()) return names;
  std::string s(line);
  for (const auto& p : patterns_for(language)) {
    if (p.reject_statement_end && body.back() == ';') continue;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), p.re); it != std::sregex_iterator(); ++it) {
      std::string name = (*it)[1].str();
      auto last = name.rfind("::");
      std::string_view leaf = last == std::string::npos ? std::string_view(name) : std::string_view(name).substr(last + 2);
      if (reserved_names().contains(leaf)) continue;
      // The return-type slot must not itself be a statement keyword (`return foo(`).
      auto first_word_end = body.find_first_of(" \t(");
      if (statement_keywords().contains(body.substr(0, first_word_end))) continue;
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
    if (!names.empty()) break;
  }
  return names;
}

std::size_t count_functions(const FileDiff& diff, Language language) {
  if (diff.hunks.empty()) return 0;
  std::set<std::string> signatures;
  auto collect = [&](std::string_view line) {
    for (auto& n : match_signatures(line, language)) signatures.insert(std::move(n));
  };
  for (const auto& h : diff.hunks) {
    collect(h.header_context);
    for (const auto& l : h.lines)
      if (l.marker != Marker::Deleted) collect(l.text);
  }
  return signatures.empty() ? diff.hunks.size() : signatures.size();
}

}  // namespace reef::diff
