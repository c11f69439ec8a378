#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace nrf::cli {

// Flat dotted-key configuration. Values come from the registered defaults,
// then the TOML file, then command-line overrides. Unknown keys are errors.
class Settings {
 public:
  using Value = std::variant<std::int64_t, double, bool, std::string, std::vector<std::string>, std::vector<double>>;

  Settings& add(const std::string& key, Value def);

  void load_toml(const std::filesystem::path& path);
  void load_toml_string(const std::string& text, const std::string& source = "config");
  // Parses `text` according to the key's type; lists are comma separated.
  void set_from_string(const std::string& key, const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  const std::vector<std::string>& texts(const std::string& key) const;
  const std::vector<double>& reals(const std::string& key) const;

  std::string to_toml() const;

 private:
  const Value& get(const std::string& key) const;
  void assign(const std::string& key, Value v, const std::string& where);

  std::map<std::string, Value> values_;
};

}  // namespace nrf::cli
