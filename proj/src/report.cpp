#include "incidur/report.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "incidur/error.hpp"
#include "incidur/incident_io.hpp"

namespace incidur {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void KeyValues::comment(std::string text) { lines_.emplace_back(std::string{}, std::move(text)); }

void KeyValues::set(std::string key, std::string value) {
  for (auto& [k, v] : lines_)
    if (k == key) {
      v = std::move(value);
      return;
    }
  lines_.emplace_back(std::move(key), std::move(value));
}

void KeyValues::set(std::string key, double value) { set(std::move(key), format_double(value)); }

void KeyValues::set(std::string key, long long value) { set(std::move(key), std::to_string(value)); }

std::optional<std::string> KeyValues::get(std::string_view key) const {
  for (const auto& [k, v] : lines_)
    if (!k.empty() && k == key) return v;
  return std::nullopt;
}

std::vector<std::string> KeyValues::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : lines_)
    if (!k.empty()) out.push_back(k);
  return out;
}

void KeyValues::append(const KeyValues& other, std::string_view prefix) {
  for (const auto& [k, v] : other.lines_) {
    if (k.empty()) {
      comment(v);
    } else {
      set(std::string(prefix) + k, v);
    }
  }
}

void KeyValues::write(std::ostream& out) const {
  for (const auto& [k, v] : lines_) {
    if (k.empty()) {
      out << "# " << v << '\n';
    } else {
      out << k << " = " << v << '\n';
    }
  }
}

void KeyValues::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
}

KeyValues KeyValues::parse(std::istream& in) {
  KeyValues kv;
  std::set<std::string> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("line " + std::to_string(n) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw DataError("line " + std::to_string(n) + ": empty key");
    if (!seen.insert(key).second) throw DataError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
    kv.lines_.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse(in);
}

}  // namespace incidur
