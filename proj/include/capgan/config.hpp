#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace capgan {

// Flat key/value configuration parsed from INI-style text: `key = value`
// lines, optional `[section]` headers that prefix keys as "section.key",
// `#` or `;` comments, blank lines ignored.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text, const std::string& origin = "<text>");
ConfigMap parse_config_file(const std::string& path);

void write_config(const ConfigMap& cfg, const std::string& path);

// Typed getters. The *_or forms fall back to the default when the key is
// absent; all forms throw ParamError on unparseable values, naming the key.
std::string cfg_string_or(const ConfigMap& c, const std::string& key,
                          const std::string& def);
double cfg_double_or(const ConfigMap& c, const std::string& key, double def);
long long cfg_int_or(const ConfigMap& c, const std::string& key, long long def);
std::uint64_t cfg_uint_or(const ConfigMap& c, const std::string& key, std::uint64_t def);
bool cfg_bool_or(const ConfigMap& c, const std::string& key, bool def);

}  // namespace capgan
