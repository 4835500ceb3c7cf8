#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tpobdl {

/// One `[type name]` block of a key-value file.
struct KvSection {
  std::string type;
  std::string name;  // optional second word of the header
  int line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> entry_lines;

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
};

/// Flat key-value text with `[section]` headers and `#` comments. Keys
/// before the first header land in a section with an empty type.
std::vector<KvSection> parse_key_values(const std::string& text, const std::string& origin);
std::vector<KvSection> load_key_values(const std::filesystem::path& path);

double parse_double(const std::string& value, const std::string& what);
long long parse_int(const std::string& value, const std::string& what);
std::uint64_t parse_uint64(const std::string& value, const std::string& what);
bool parse_bool(const std::string& value, const std::string& what);

}  // namespace tpobdl
