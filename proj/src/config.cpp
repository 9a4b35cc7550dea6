#include "capgan/config.hpp"

#include <fstream>
#include <sstream>

#include "capgan/error.hpp"

namespace capgan {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ParamError("config: bad section header at " + origin + ":" +
                         std::to_string(lineno));
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParamError("config: expected key = value at " + origin + ":" +
                       std::to_string(lineno));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParamError("config: empty key at " + origin + ":" + std::to_string(lineno));
    if (!section.empty()) key = section + "." + key;
    if (cfg.count(key))
      throw ParamError("config: duplicate key '" + key + "' at " + origin + ":" +
                       std::to_string(lineno));
    cfg[key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void write_config(const ConfigMap& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  for (const auto& [k, v] : cfg) out << k << " = " << v << "\n";
  if (!out) throw IoError("config: write failed for " + path);
}

std::string cfg_string_or(const ConfigMap& c, const std::string& key,
                          const std::string& def) {
  auto it = c.find(key);
  return it == c.end() ? def : it->second;
}

double cfg_double_or(const ConfigMap& c, const std::string& key, double def) {
  auto it = c.find(key);
  if (it == c.end()) return def;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParamError("config: key '" + key + "' is not a number: " + it->second);
  }
}

long long cfg_int_or(const ConfigMap& c, const std::string& key, long long def) {
  auto it = c.find(key);
  if (it == c.end()) return def;
  try {
    std::size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParamError("config: key '" + key + "' is not an integer: " + it->second);
  }
}

std::uint64_t cfg_uint_or(const ConfigMap& c, const std::string& key,
                          std::uint64_t def) {
  auto it = c.find(key);
  if (it == c.end()) return def;
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size() || it->second[0] == '-')
      throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParamError("config: key '" + key + "' is not an unsigned integer: " +
                     it->second);
  }
}

bool cfg_bool_or(const ConfigMap& c, const std::string& key, bool def) {
  auto it = c.find(key);
  if (it == c.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParamError("config: key '" + key + "' is not a boolean: " + v);
}

}  // namespace capgan
