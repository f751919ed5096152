#pragma once

// Ordered "key = value" text used for reports and config files.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace incidur {

class KeyValues {
 public:
  void comment(std::string text);
  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, long long value);
  void set(std::string key, int value) { set(std::move(key), static_cast<long long>(value)); }
  void set(std::string key, std::size_t value) { set(std::move(key), static_cast<long long>(value)); }
  void set(std::string key, bool value) { set(std::move(key), std::string(value ? "true" : "false")); }
  void set(std::string key, const char* value) { set(std::move(key), std::string(value)); }

  std::optional<std::string> get(std::string_view key) const;
  std::vector<std::string> keys() const;
  void append(const KeyValues& other, std::string_view prefix = {});

  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;
  // Blank lines and lines starting with '#' are skipped. Throws DataError on
  // a line without '=' or a repeated key.
  static KeyValues parse(std::istream& in);
  static KeyValues read(const std::filesystem::path& path);

 private:
  // Comments have an empty key.
  std::vector<std::pair<std::string, std::string>> lines_;
};

}  // namespace incidur
