#pragma once

// Literal `{{name}}` templating. A placeholder is `{{` + one or more of
// [A-Za-z0-9_.-] + `}}`; it is replaced by the verbatim field text and the
// substituted text is never re-scanned. Any other `{{` is literal text.
// There is no escaping, nesting, or logic.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concord/types.hpp"

namespace concord {

// Distinct placeholder names in order of first appearance.
std::vector<std::string> placeholders_in(std::string_view tmpl);

using PlaceholderResolver = std::function<std::optional<std::string>(std::string_view name)>;

// Throws UnresolvedPlaceholder for the first name the resolver rejects.
std::string substitute(std::string_view tmpl, const PlaceholderResolver& resolve);

// Names the reasoner template may use in addition to context fields.
bool is_reasoner_placeholder(std::string_view name);

// Hash over rendered text plus the (source_id, content_hash) of every
// attached image, in order.
std::string compute_prompt_hash(std::string_view rendered_text, const std::vector<ImageInput>& images);

// Renders `tmpl` against the context. Every image input is attached in
// context order; each must carry a content hash and, when it has a
// media_ref, that file must exist.
CanonicalPrompt render_canonical_prompt(std::string_view tmpl, const SharedContext& context,
                                        std::string template_id = "prompt");

}  // namespace concord
