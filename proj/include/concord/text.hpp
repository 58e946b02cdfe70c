#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace concord::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

// Lowercase, punctuation replaced by spaces, whitespace collapsed.
std::string normalize(std::string_view s);

// Distinct tokens of normalize(s).
std::set<std::string> token_set(std::string_view s);

// token_set(s) minus a fixed English stopword list.
std::set<std::string> content_tokens(std::string_view s);

// Splits on '.', '!' or '?' followed by whitespace; each piece is trimmed and
// empty pieces dropped. The terminator stays with its sentence.
std::vector<std::string> segment_claims(std::string_view s);

// Split on '\n' keeping empty pieces, so join(split(s)) == s.
std::vector<std::string_view> split_lines(std::string_view s);

}  // namespace concord::text
