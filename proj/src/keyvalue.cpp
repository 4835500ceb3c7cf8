#include "tpobdl/keyvalue.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tpobdl/error.hpp"

namespace tpobdl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool KvSection::has(const std::string& key) const { return entry_lines.count(key) > 0; }

const std::string& KvSection::get(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  throw ConfigError("missing key '" + key + "' in section [" + type +
                    (name.empty() ? "" : " " + name) + "]");
}

std::vector<KvSection> parse_key_values(const std::string& text, const std::string& origin) {
  std::vector<KvSection> sections(1);
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      std::istringstream hdr(line.substr(1, line.size() - 2));
      KvSection s;
      s.line = line_no;
      hdr >> s.type >> s.name;
      std::string extra;
      if (s.type.empty() || (hdr >> extra)) {
        throw ConfigError(where + ": section header must be [type] or [type name]");
      }
      sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    KvSection& s = sections.back();
    if (s.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    s.entries.emplace_back(key, value);
    s.entry_lines[key] = line_no;
  }
  if (sections.front().entries.empty()) sections.erase(sections.begin());
  return sections;
}

std::vector<KvSection> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

double parse_double(const std::string& value, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (...) {
  }
  throw ConfigError("'" + what + "': expected a number, got '" + value + "'");
}

long long parse_int(const std::string& value, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (...) {
  }
  throw ConfigError("'" + what + "': expected an integer, got '" + value + "'");
}

std::uint64_t parse_uint64(const std::string& value, const std::string& what) {
  std::uint64_t v = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec == std::errc() && ptr == end && !value.empty()) return v;
  throw ConfigError("'" + what + "': expected an unsigned 64-bit integer, got '" + value + "'");
}

bool parse_bool(const std::string& value, const std::string& what) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + what + "': expected true/false, got '" + value + "'");
}

}  // namespace tpobdl
