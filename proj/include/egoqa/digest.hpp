#pragma once

#include <string>
#include <string_view>

namespace egoqa {

// Lowercase hex SHA-256 of the payload.
std::string sha256_hex(std::string_view data);

// Standard-alphabet base64 with padding and no line breaks.
std::string base64_encode(std::string_view data);

}  // namespace egoqa
