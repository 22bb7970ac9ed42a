#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtp/errors.hpp"

namespace mtp::csv {

// A parsed delimited table. Lines starting with '#' before the header are
// kept as metadata (schema/version tags); blank lines are ignored.
struct Table {
  std::vector<std::string> metadata;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }

  std::size_t require(std::string_view name, std::string_view file = "table") const {
    auto j = find(name);
    if (!j) throw InputError(std::string(file) + ": missing required column '" + std::string(name) + "'");
    return *j;
  }
};

inline std::vector<std::string> split_line(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline Table parse(std::istream& in, std::string_view name = "table") {
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (!have_header && line[0] == '#') {
      t.metadata.push_back(line.substr(1));
      continue;
    }
    auto fields = split_line(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw InputError(std::string(name) + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw InputError(std::string(name) + ": empty file");
  return t;
}

inline Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse(in, path.filename().string());
}

inline double parse_double(const std::string& s, std::string_view what) {
  double v = 0.0;
  auto first = s.data();
  auto last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw InputError("cannot parse '" + s + "' as a number in " + std::string(what));
  return v;
}

inline long long parse_int(const std::string& s, std::string_view what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("cannot parse '" + s + "' as an integer in " + std::string(what));
  return v;
}

// Shortest round-trip representation; stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string to_string(const Table& t) {
  std::ostringstream os;
  for (const auto& m : t.metadata) os << '#' << m << '\n';
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j) os << ',';
      os << escape(fields[j]);
    }
    os << '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return os.str();
}

// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file(const std::filesystem::path& path, const Table& t) { write_atomic(path, to_string(t)); }

}  // namespace mtp::csv
