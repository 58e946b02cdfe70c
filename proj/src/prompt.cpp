#include "concord/prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>

#include "concord/error.hpp"
#include "concord/hash.hpp"
#include "concord/serialize.hpp"

namespace concord {

namespace {

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '.' || c == '-';
}

// Length of the placeholder starting at tmpl[pos] (which is at "{{"), or 0.
std::size_t placeholder_length(std::string_view tmpl, std::size_t pos, std::string_view& name) {
  std::size_t i = pos + 2;
  while (i < tmpl.size() && is_name_char(tmpl[i])) ++i;
  if (i == pos + 2 || i + 1 >= tmpl.size() || tmpl[i] != '}' || tmpl[i + 1] != '}') return 0;
  name = tmpl.substr(pos + 2, i - pos - 2);
  return i + 2 - pos;
}

template <typename Visit>
void scan(std::string_view tmpl, Visit&& visit) {
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      visit(tmpl.substr(pos), std::string_view{}, false);
      return;
    }
    std::string_view name;
    const std::size_t len = placeholder_length(tmpl, open, name);
    if (len == 0) {
      visit(tmpl.substr(pos, open + 1 - pos), std::string_view{}, false);
      pos = open + 1;
      continue;
    }
    visit(tmpl.substr(pos, open - pos), name, true);
    pos = open + len;
  }
}

constexpr std::array<std::string_view, 5> kReasonerPlaceholders = {
    "canonical_prompt", "candidates", "consensus_summary", "policies", "output_grammar"};

}  // namespace

std::vector<std::string> placeholders_in(std::string_view tmpl) {
  std::vector<std::string> names;
  scan(tmpl, [&](std::string_view, std::string_view name, bool has_name) {
    if (has_name && std::find(names.begin(), names.end(), name) == names.end()) names.emplace_back(name);
  });
  return names;
}

std::string substitute(std::string_view tmpl, const PlaceholderResolver& resolve) {
  std::string out;
  out.reserve(tmpl.size());
  scan(tmpl, [&](std::string_view literal, std::string_view name, bool has_name) {
    out.append(literal);
    if (!has_name) return;
    auto value = resolve(name);
    if (!value) throw UnresolvedPlaceholder(std::string(name));
    out.append(*value);
  });
  return out;
}

bool is_reasoner_placeholder(std::string_view name) {
  return std::find(kReasonerPlaceholders.begin(), kReasonerPlaceholders.end(), name) != kReasonerPlaceholders.end();
}

std::string compute_prompt_hash(std::string_view rendered_text, const std::vector<ImageInput>& images) {
  json doc = {{"images", json::array()}, {"rendered_text", rendered_text}};
  for (const auto& image : images) {
    doc["images"].push_back({{"content_hash", image.content_hash}, {"source_id", image.source_id}});
  }
  return hash_content(canonical_dump(doc));
}

CanonicalPrompt render_canonical_prompt(std::string_view tmpl, const SharedContext& context, std::string template_id) {
  CanonicalPrompt prompt;
  prompt.template_id = std::move(template_id);
  prompt.rendered_text = substitute(tmpl, [&](std::string_view name) -> std::optional<std::string> {
    if (auto value = context.lookup(name)) return std::string(*value);
    return std::nullopt;
  });
  for (const auto& image : context.image_inputs) {
    if (image.content_hash.empty()) throw MissingImage(image.source_id);
    if (!image.media_ref.empty() && !std::filesystem::exists(image.media_ref)) throw MissingImage(image.source_id);
    prompt.attached_images.push_back(image);
  }
  prompt.prompt_hash = compute_prompt_hash(prompt.rendered_text, prompt.attached_images);
  return prompt;
}

}  // namespace concord
