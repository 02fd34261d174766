#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ruta {

/// Parses hex text; whitespace is ignored and '#' starts a comment running to end of line.
std::vector<std::uint8_t> parse_hex(std::string_view text);

/// Lowercase hex, octets separated by single spaces.
std::string to_hex(std::span<const std::uint8_t> bytes);

} // namespace ruta
