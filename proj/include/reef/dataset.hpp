#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reef/enrich.hpp"
#include "reef/ingest.hpp"

namespace reef::dataset {

// The published record layout; field names and order are fixed.
inline constexpr std::array<std::string_view, 11> kFieldNames = {
    "index", "language", "cve_id", "cvss", "cwes", "llm_message", "origin_message",
    "url", "html_url", "raw_url", "raw_code"};

struct DatasetItem {
  std::size_t index = 0;
  std::string language;
  std::string cve_id;
  double cvss = 0.0;
  std::vector<std::string> cwes;
  std::string llm_message;
  std::string origin_message;
  std::string url;
  std::string html_url;
  std::string raw_url;
  std::string raw_code;

  bool operator==(const DatasetItem&) const = default;
};

// Per-item diff facts that do not belong in the record itself.
struct ItemMetrics {
  std::size_t index = 0;
  std::string cve_id;
  std::string repo;  // owner/name
  std::string path;
  std::size_t changed_loc = 0;
  std::size_t function_units = 0;
  std::vector<std::pair<std::size_t, std::size_t>> locations;  // old-file (start, length)

  bool operator==(const ItemMetrics&) const = default;
};

struct Assembly {
  std::vector<DatasetItem> items;
  std::vector<ItemMetrics> metrics;  // parallel to items
  std::size_t skipped_unrecognized = 0;
};

class EmptyAssembly : public Error {
 public:
  explicit EmptyAssembly(const std::string& cve_id) : Error(cve_id + " has no changed file in a recognized language") {}
};

// One item per (commit, recognized source file), ordered by commit then path.
// Indices are left at 0; the sink assigns them.
Assembly assemble_items(const ingest::AdvisoryRecord& advisory, std::span<const ingest::CommitPatch> commits,
                        const enrich::ExplanationResult& explanation);

struct Violation {
  std::string code;
  std::string field;

  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_item(const DatasetItem& item);
// Per-item checks plus index contiguity and llm_message uniformity per cve_id.
std::vector<Violation> validate_items(std::span<const DatasetItem> items);

// Renumbers from 0 in the current order.
void assign_indices(std::span<DatasetItem> items);
void assign_indices(std::span<DatasetItem> items, std::span<ItemMetrics> metrics);

class IntegrityError : public Error {
 public:
  using Error::Error;
};

std::string serialize_item(const DatasetItem& item);
DatasetItem parse_item(std::string_view line, std::size_t lineno = 0);

// Line-delimited records sorted by index, atomically replacing `path`.
// Any violation aborts before the file is touched.
std::size_t write_records(std::vector<DatasetItem> items, const std::filesystem::path& path);
std::vector<DatasetItem> read_records(const std::filesystem::path& path);

void write_metrics(std::vector<ItemMetrics> metrics, const std::filesystem::path& path);
std::vector<ItemMetrics> read_metrics(const std::filesystem::path& path);

}  // namespace reef::dataset
