#include "concord/grammar.hpp"

#include <algorithm>

#include "concord/text.hpp"

namespace concord {

namespace {

std::string strip_decoration(std::string_view value) {
  std::string v = text::trim(value);
  auto is_deco = [](char c) { return c == '*' || c == '`' || c == '"'; };
  std::size_t b = 0;
  std::size_t e = v.size();
  while (b < e && is_deco(v[b])) ++b;
  while (e > b && is_deco(v[e - 1])) --e;
  return text::trim(std::string_view(v).substr(b, e - b));
}

struct KeyValue {
  std::string key;
  std::string value;
};

std::optional<KeyValue> split_key_value(std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto key = strip_decoration(line.substr(0, colon));
  if (key.empty()) return std::nullopt;
  return KeyValue{std::move(key), std::string(line.substr(colon + 1))};
}

std::optional<StructuredPayload> parse_single_label(std::string_view raw, const OutputSchema& schema) {
  StructuredPayload payload;
  payload.kind = SchemaKind::single_label;
  bool have_label = false;
  for (auto line : text::split_lines(raw)) {
    auto kv = split_key_value(line);
    if (!kv) continue;
    if (text::iequals(kv->key, "label")) {
      if (have_label) return std::nullopt;
      auto canon = schema.canonical_label(strip_decoration(kv->value));
      if (!canon) return std::nullopt;
      payload.label = *canon;
      have_label = true;
    } else if (text::iequals(kv->key, "rationale")) {
      if (payload.rationale) return std::nullopt;
      payload.rationale = text::trim(kv->value);
    }
  }
  if (!have_label) return std::nullopt;
  return payload;
}

std::optional<StructuredPayload> parse_labeled_items(std::string_view raw, const OutputSchema& schema) {
  StructuredPayload payload;
  payload.kind = SchemaKind::labeled_items;
  for (auto line : text::split_lines(raw)) {
    auto kv = split_key_value(line);
    if (!kv) continue;
    auto item = schema.canonical_item(kv->key);
    if (!item) continue;
    if (payload.items.count(*item) != 0) return std::nullopt;

    std::string_view value = kv->value;
    ItemAssessment assessment;
    if (const auto semi = value.find(';'); semi != std::string_view::npos) {
      auto rationale = text::trim(value.substr(semi + 1));
      if (!rationale.empty()) assessment.rationale = std::move(rationale);
      value = value.substr(0, semi);
    }
    const auto comma = value.find(',');
    auto status = schema.canonical_label(strip_decoration(value.substr(0, comma)));
    if (!status) return std::nullopt;
    assessment.status = *status;
    if (comma != std::string_view::npos) {
      const auto grade_text = value.substr(comma + 1);
      if (grade_text.find(',') != std::string_view::npos) return std::nullopt;
      auto grade = schema.canonical_severity(strip_decoration(grade_text));
      if (!grade) return std::nullopt;
      assessment.severity = *grade;
    }
    payload.items.emplace(*item, std::move(assessment));
  }
  if (payload.items.empty()) return std::nullopt;
  return payload;
}

std::optional<StructuredPayload> parse_clinical_report(std::string_view raw, const OutputSchema& schema) {
  StructuredPayload payload;
  payload.kind = SchemaKind::clinical_report;
  std::string body;
  auto flush = [&] {
    if (!payload.sections.empty()) payload.sections.back().claims = text::segment_claims(body);
    body.clear();
  };
  for (auto line : text::split_lines(raw)) {
    auto kv = split_key_value(line);
    if (kv && text::iequals(kv->key, "section")) {
      auto name = schema.canonical_section(strip_decoration(kv->value));
      if (!name) return std::nullopt;
      for (const auto& existing : payload.sections) {
        if (existing.name == *name) return std::nullopt;
      }
      flush();
      payload.sections.push_back(ReportSection{*name, {}});
      continue;
    }
    if (payload.sections.empty()) continue;
    body.append(line);
    body.push_back('\n');
  }
  flush();
  if (payload.sections.empty()) return std::nullopt;
  return payload;
}

}  // namespace

std::optional<StructuredPayload> parse_structured(std::string_view raw_text, const OutputSchema& schema) {
  switch (schema.kind) {
    case SchemaKind::single_label: return parse_single_label(raw_text, schema);
    case SchemaKind::labeled_items: return parse_labeled_items(raw_text, schema);
    case SchemaKind::clinical_report: return parse_clinical_report(raw_text, schema);
    case SchemaKind::free_text: {
      StructuredPayload payload;
      payload.kind = SchemaKind::free_text;
      payload.claims = text::segment_claims(raw_text);
      if (payload.claims.empty()) return std::nullopt;
      return payload;
    }
  }
  return std::nullopt;
}

std::string render_structured(const StructuredPayload& payload) {
  std::string out;
  switch (payload.kind) {
    case SchemaKind::single_label:
      out += "label: " + payload.label + "\n";
      if (payload.rationale) out += "rationale: " + *payload.rationale + "\n";
      break;
    case SchemaKind::labeled_items:
      for (const auto& [item, a] : payload.items) {
        out += item + ": " + a.status;
        if (a.severity) out += ", " + *a.severity;
        if (a.rationale) out += "; " + *a.rationale;
        out += "\n";
      }
      break;
    case SchemaKind::clinical_report:
      for (const auto& section : payload.sections) {
        out += "section: " + section.name + "\n";
        for (std::size_t i = 0; i < section.claims.size(); ++i) {
          out += (i == 0 ? "" : " ") + section.claims[i];
        }
        out += "\n";
      }
      break;
    case SchemaKind::free_text:
      for (std::size_t i = 0; i < payload.claims.size(); ++i) {
        out += (i == 0 ? "" : " ") + payload.claims[i];
      }
      out += "\n";
      break;
  }
  return out;
}

}  // namespace concord
