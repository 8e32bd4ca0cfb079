#pragma once

#include <json.hpp>

#include <string>

namespace optcalib {

// Minimal TOML reader covering what run configs need: top-level and
// single-level [section] tables, keys of [A-Za-z0-9_-], values that are
// strings, booleans, integers, floats, or flat arrays thereof, and #
// comments. Anything else is a ConfigError with a line number.
nlohmann::json parse_toml_lite(const std::string& text);

}  // namespace optcalib
