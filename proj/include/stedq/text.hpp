#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stedq {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
/// Like format_double but with at least `min_decimals` digits after the point.
std::string format_fixed_min(double value, int min_decimals);
double parse_double(std::string_view text);
std::uint64_t parse_uint(std::string_view text);
std::vector<std::size_t> parse_size_list(std::string_view text);
std::string join_sizes(const std::vector<std::size_t>& values);
std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Canonical `key=value` lines. Keys keep insertion order on output.
class KeyValueText {
 public:
  void set(std::string key, std::string value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  /// Parses `key=value` lines; blank lines and `#` comments are skipped. Throws on malformed lines.
  static KeyValueText parse(std::string_view text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);
/// SHA-256 of a file's contents as lowercase hex.
std::string file_digest_hex(const std::string& path);

}  // namespace stedq
