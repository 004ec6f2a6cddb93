#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Plain-text persistence shared by the pipeline and the CLI: key = value
// configuration files, comma-separated tables with commented headers,
// whole-file atomic writes, and a stable content fingerprint. Numbers are
// written with 17 significant digits so every double survives the round trip
// through its text form bit for bit.
namespace ionsim::io {

std::string format_double(double value);
// Strict: the whole string must parse (accepts nan/inf spellings).
double parse_double(const std::string& text);

// Ordered key = value file. Insertion order is preserved so serialization is
// stable; set() replaces an existing key in place.
struct Config {
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(std::string_view key) const;
  const std::string& get(std::string_view key) const;  // throws when missing
  std::string get_or(std::string_view key, std::string fallback) const;
  void set(std::string_view key, std::string value);
  void set_double(std::string_view key, double value);
  void set_int(std::string_view key, long long value);
  void set_bool(std::string_view key, bool value);
  void set_double_list(std::string_view key, const std::vector<double>& values);

  double get_double(std::string_view key) const;
  long long get_int(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<double> get_double_list(std::string_view key) const;
};

// Lines of "key = value"; blank lines and lines starting with '#' are
// skipped. Duplicate keys are an error (they hide editing mistakes).
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& file);
std::string serialize(const Config& config);

std::uint64_t fnv1a(std::string_view bytes);
// 16 lowercase hex digits over the serialized form.
std::string fingerprint(const Config& config);

// Write-temp-then-rename so readers never observe a partial file. Parent
// directories are created as needed.
void atomic_write(const std::filesystem::path& file, const std::string& content);
std::string read_file(const std::filesystem::path& file);

// Comma-separated table with "# key: value" comment lines above the column
// header. Cells are kept as text; numeric cells use format_double.
struct Table {
  std::vector<std::pair<std::string, std::string>> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string comment(std::string_view key) const;  // empty when absent
  int column(std::string_view name) const;          // throws when absent
  double number(int row, int col) const;
};

std::string serialize_csv(const Table& table);
Table parse_csv(const std::string& text);

}  // namespace ionsim::io
