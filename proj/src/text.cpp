#include "concord/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace concord::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Bytes >= 0x80 are kept so UTF-8 words survive normalization intact.
bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

constexpr std::array<std::string_view, 48> kStopwords = {
    "a",    "an",   "and",  "are",  "as",    "at",    "be",   "been", "but",  "by",   "for",  "from",
    "had",  "has",  "have", "he",   "her",   "his",   "i",    "in",   "into", "is",   "it",   "its",
    "of",   "on",   "or",   "our",  "she",   "that",  "the",  "their", "them", "then", "there", "these",
    "they", "this", "to",   "was",  "we",    "were",  "which", "will", "with", "you",  "your", "not"};

}  // namespace

std::string trim(std::string_view s) {
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return begin < end ? std::string(begin, end) : std::string();
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_word_byte(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::set<std::string> token_set(std::string_view s) {
  std::set<std::string> tokens;
  const std::string norm = normalize(s);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.emplace(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

std::set<std::string> content_tokens(std::string_view s) {
  auto tokens = token_set(s);
  for (auto stop : kStopwords) tokens.erase(std::string(stop));
  return tokens;
}

std::vector<std::string> segment_claims(std::string_view s) {
  std::vector<std::string> claims;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < s.size() && is_space(s[i + 1])) {
      auto piece = trim(s.substr(start, i + 1 - start));
      if (!piece.empty()) claims.push_back(std::move(piece));
      start = i + 1;
    }
  }
  auto tail = trim(s.substr(std::min(start, s.size())));
  if (!tail.empty()) claims.push_back(std::move(tail));
  return claims;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      return lines;
    }
    lines.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
}

}  // namespace concord::text
