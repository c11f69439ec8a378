#include "settings.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <toml.hpp>

#include "nrf/error.hpp"

namespace nrf::cli {

namespace {

const char* type_name(const Settings::Value& v) {
  switch (v.index()) {
    case 0: return "integer";
    case 1: return "float";
    case 2: return "boolean";
    case 3: return "string";
    case 4: return "list of strings";
    default: return "list of floats";
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

template <class T>
bool parse_num(const std::string& s, T& v) {
  const std::string t = trim(s);
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  return !t.empty() && res.ec == std::errc() && res.ptr == t.data() + t.size();
}

// Converts a TOML leaf to the registered type of `like`.
bool from_node(const toml::node& node, const Settings::Value& like, Settings::Value& out) {
  switch (like.index()) {
    case 0:
      if (auto v = node.as_integer()) return out = v->get(), true;
      return false;
    case 1:
      if (auto v = node.as_floating_point()) return out = v->get(), true;
      if (auto v = node.as_integer()) return out = static_cast<double>(v->get()), true;
      return false;
    case 2:
      if (auto v = node.as_boolean()) return out = v->get(), true;
      return false;
    case 3:
      if (auto v = node.as_string()) return out = v->get(), true;
      return false;
    case 4: {
      auto arr = node.as_array();
      if (!arr) return false;
      std::vector<std::string> items;
      for (auto&& e : *arr) {
        auto s = e.as_string();
        if (!s) return false;
        items.push_back(s->get());
      }
      return out = std::move(items), true;
    }
    default: {
      auto arr = node.as_array();
      if (!arr) return false;
      std::vector<double> items;
      for (auto&& e : *arr) {
        if (auto f = e.as_floating_point())
          items.push_back(f->get());
        else if (auto i = e.as_integer())
          items.push_back(static_cast<double>(i->get()));
        else
          return false;
      }
      return out = std::move(items), true;
    }
  }
}

void walk(const toml::table& tbl, const std::string& prefix,
          const std::function<void(const std::string&, const toml::node&)>& leaf) {
  for (auto&& [k, v] : tbl) {
    const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (auto sub = v.as_table())
      walk(*sub, key, leaf);
    else
      leaf(key, v);
  }
}

}  // namespace

Settings& Settings::add(const std::string& key, Value def) {
  values_[key] = std::move(def);
  return *this;
}

void Settings::assign(const std::string& key, Value v, const std::string& where) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(where + ": unknown key '" + key + "'");
  if (it->second.index() != v.index())
    throw ConfigError(where + ": key '" + key + "' expects a " + type_name(it->second));
  it->second = std::move(v);
}

void Settings::load_toml_string(const std::string& text, const std::string& source) {
  toml::table tbl;
  try {
    tbl = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  walk(tbl, "", [&](const std::string& key, const toml::node& node) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(source + ": unknown key '" + key + "'");
    Value v;
    if (!from_node(node, it->second, v))
      throw ConfigError(source + ": key '" + key + "' expects a " + type_name(it->second));
    it->second = std::move(v);
  });
}

void Settings::load_toml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_toml_string(buf.str(), path.string());
}

void Settings::set_from_string(const std::string& key, const std::string& text) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  const std::string where = "option for '" + key + "'";
  switch (it->second.index()) {
    case 0: {
      std::int64_t v;
      if (!parse_num(text, v)) throw ConfigError(where + ": expected an integer, got '" + text + "'");
      it->second = v;
      break;
    }
    case 1: {
      double v;
      if (!parse_num(text, v)) throw ConfigError(where + ": expected a number, got '" + text + "'");
      it->second = v;
      break;
    }
    case 2: {
      const std::string t = trim(text);
      if (t == "true" || t == "1" || t == "yes")
        it->second = true;
      else if (t == "false" || t == "0" || t == "no")
        it->second = false;
      else
        throw ConfigError(where + ": expected true or false, got '" + text + "'");
      break;
    }
    case 3: it->second = trim(text); break;
    case 4: it->second = split_list(text); break;
    default: {
      std::vector<double> items;
      for (const auto& s : split_list(text)) {
        double v;
        if (!parse_num(s, v)) throw ConfigError(where + ": expected numbers, got '" + text + "'");
        items.push_back(v);
      }
      it->second = std::move(items);
    }
  }
}

const Settings::Value& Settings::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("setting '" + key + "' was never registered");
  return it->second;
}

std::int64_t Settings::integer(const std::string& key) const { return std::get<std::int64_t>(get(key)); }

std::size_t Settings::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double Settings::real(const std::string& key) const { return std::get<double>(get(key)); }
bool Settings::flag(const std::string& key) const { return std::get<bool>(get(key)); }
const std::string& Settings::text(const std::string& key) const { return std::get<std::string>(get(key)); }
const std::vector<std::string>& Settings::texts(const std::string& key) const {
  return std::get<std::vector<std::string>>(get(key));
}
const std::vector<double>& Settings::reals(const std::string& key) const {
  return std::get<std::vector<double>>(get(key));
}

std::string Settings::to_toml() const {
  toml::table root;
  for (const auto& [key, value] : values_) {
    toml::table* tbl = &root;
    std::string rest = key;
    for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
      const std::string part = rest.substr(0, dot);
      if (!tbl->contains(part)) tbl->insert(part, toml::table{});
      tbl = (*tbl)[part].as_table();
      rest = rest.substr(dot + 1);
    }
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::vector<std::string>> || std::is_same_v<T, std::vector<double>>) {
            toml::array arr;
            for (const auto& e : v) arr.push_back(e);
            tbl->insert(rest, std::move(arr));
          } else {
            tbl->insert(rest, v);
          }
        },
        value);
  }
  std::ostringstream out;
  out << toml::toml_formatter(root) << '\n';
  return out.str();
}

}  // namespace nrf::cli
