#pragma once

#include <string>
#include <string_view>

namespace concord {

// Name recorded in audit headers so trails are self-describing.
inline constexpr std::string_view kHashAlgorithm = "sha256";

// Lowercase hex SHA-256 of the given bytes (always 64 characters).
std::string hash_content(std::string_view bytes);

// 64 zeros; prev_hash of the first audit record.
std::string zero_hash();

std::string base64_encode(std::string_view bytes);

}  // namespace concord
