#include "ionsim/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ionsim::io {
namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(const std::string& text) {
  const std::string body = trim(text);
  if (body.empty()) throw std::invalid_argument("empty number");
  char* end = nullptr;
  const double value = std::strtod(body.c_str(), &end);
  if (end != body.c_str() + body.size())
    throw std::invalid_argument("malformed number: '" + body + "'");
  return value;
}

bool Config::has(std::string_view key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

const std::string& Config::get(std::string_view key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw std::invalid_argument("missing config key: " + std::string(key));
}

std::string Config::get_or(std::string_view key, std::string fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

void Config::set(std::string_view key, std::string value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = std::move(value);
      return;
    }
  entries.emplace_back(std::string(key), std::move(value));
}

void Config::set_double(std::string_view key, double value) { set(key, format_double(value)); }

void Config::set_int(std::string_view key, long long value) { set(key, std::to_string(value)); }

void Config::set_bool(std::string_view key, bool value) { set(key, value ? "true" : "false"); }

void Config::set_double_list(std::string_view key, const std::vector<double>& values) {
  std::string joined;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) joined += ", ";
    joined += format_double(values[k]);
  }
  set(key, joined);
}

double Config::get_double(std::string_view key) const {
  try {
    return parse_double(get(key));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("config key '" + std::string(key) + "' is not a number");
  }
}

long long Config::get_int(std::string_view key) const {
  const std::string body = trim(get(key));
  char* end = nullptr;
  const long long value = std::strtoll(body.c_str(), &end, 10);
  if (body.empty() || end != body.c_str() + body.size())
    throw std::invalid_argument("config key '" + std::string(key) + "' is not an integer");
  return value;
}

bool Config::get_bool(std::string_view key) const {
  const std::string v = trim(get(key));
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "' is not a boolean");
}

std::vector<double> Config::get_double_list(std::string_view key) const {
  const std::string body = trim(get(key));
  std::vector<double> values;
  if (body.empty()) return values;
  for (const auto& part : split(body, ',')) {
    try {
      values.push_back(parse_double(part));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("config key '" + std::string(key) + "' has a malformed entry");
    }
  }
  return values;
}

Config parse_config(const std::string& text) {
  Config config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + " lacks '='");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + " has an empty key");
    if (config.has(key)) throw std::invalid_argument("duplicate config key: " + key);
    config.entries.emplace_back(key, trim(body.substr(eq + 1)));
  }
  return config;
}

Config load_config(const std::filesystem::path& file) { return parse_config(read_file(file)); }

std::string serialize(const Config& config) {
  std::string out;
  for (const auto& [k, v] : config.entries) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string fingerprint(const Config& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize(config))));
  return buf;
}

void atomic_write(const std::filesystem::path& file, const std::string& content) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed to write " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string Table::comment(std::string_view key) const {
  for (const auto& [k, v] : comments)
    if (k == key) return v;
  return {};
}

int Table::column(std::string_view name) const {
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == name) return static_cast<int>(k);
  throw std::invalid_argument("missing table column: " + std::string(name));
}

double Table::number(int row, int col) const {
  return parse_double(rows.at(static_cast<std::size_t>(row)).at(static_cast<std::size_t>(col)));
}

std::string serialize_csv(const Table& table) {
  std::string out;
  for (const auto& [k, v] : table.comments) {
    out += "# ";
    out += k;
    out += ": ";
    out += v;
    out += '\n';
  }
  for (std::size_t k = 0; k < table.columns.size(); ++k) {
    if (k) out += ',';
    out += table.columns[k];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw std::invalid_argument("csv row width does not match the header");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += row[k];
    }
    out += '\n';
  }
  return out;
}

Table parse_csv(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (have_header) throw std::invalid_argument("csv comment below the header");
      const std::string body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("csv comment lacks ':': " + line);
      table.comments.emplace_back(trim(body.substr(0, colon)), trim(body.substr(colon + 1)));
      continue;
    }
    auto cells = split(line, ',');
    for (auto& cell : cells) cell = trim(cell);
    if (!have_header) {
      table.columns = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != table.columns.size())
        throw std::invalid_argument("csv row width does not match the header");
      table.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw std::invalid_argument("csv lacks a header line");
  return table;
}

}  // namespace ionsim::io
