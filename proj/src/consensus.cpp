#include "concord/consensus.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "concord/error.hpp"
#include "concord/grammar.hpp"
#include "concord/text.hpp"

namespace concord {

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& token : a) common += b.count(token);
  const std::size_t unite = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(unite);
}

// The set of atomic assertions a payload makes; used for the candidate-level
// similarity matrix.
std::set<std::string> assertions(const StructuredPayload& payload) {
  std::set<std::string> out;
  switch (payload.kind) {
    case SchemaKind::single_label:
      out.insert(payload.label);
      break;
    case SchemaKind::labeled_items:
      for (const auto& [item, a] : payload.items) out.insert(item + "=" + a.status + "/" + a.severity.value_or(""));
      break;
    case SchemaKind::clinical_report:
      for (const auto& section : payload.sections) {
        for (const auto& claim : section.claims) {
          auto tokens = text::token_set(claim);
          out.insert(tokens.begin(), tokens.end());
        }
      }
      break;
    case SchemaKind::free_text:
      for (const auto& claim : payload.claims) {
        auto tokens = text::token_set(claim);
        out.insert(tokens.begin(), tokens.end());
      }
      break;
  }
  return out;
}

bool tied_at_top(const Tally& tally) {
  const std::size_t top = top_count(tally);
  std::size_t at_top = 0;
  for (const auto& [value, ids] : tally) at_top += ids.size() == top ? 1 : 0;
  return at_top > 1;
}

void add_vote(Tally& tally, const std::string& value, const std::string& model_id) {
  auto& ids = tally[value];
  ids.insert(std::lower_bound(ids.begin(), ids.end(), model_id), model_id);
}

std::map<std::string, std::string> positions_of(const Tally& tally) {
  std::map<std::string, std::string> positions;
  for (const auto& [value, ids] : tally) {
    for (const auto& id : ids) positions[id] = value;
  }
  return positions;
}

struct FieldVerdict {
  bool agreed = false;
  std::string reason;
};

FieldVerdict judge_tally(const Tally& tally, std::size_t required) {
  if (tied_at_top(tally)) return {false, "tie"};
  if (top_count(tally) < required) return {false, "below_support_threshold"};
  return {true, {}};
}

}  // namespace

bool Conflict::operator<(const Conflict& other) const {
  return std::tie(target, kind, positions) < std::tie(other.target, other.kind, other.positions);
}

double text_similarity(std::string_view a, std::string_view b) {
  const auto ta = text::token_set(a);
  const auto tb = text::token_set(b);
  if (ta.empty() || tb.empty()) throw EmptyAfterNormalization();
  return jaccard(ta, tb);
}

std::vector<ClaimCluster> cluster_claims(const std::vector<ClaimRef>& claims, double threshold,
                                         const SimilarityFn& similarity, std::size_t first_index,
                                         std::string_view id_prefix) {
  std::vector<ClaimCluster> clusters;
  for (const auto& claim : claims) {
    ClaimCluster* home = nullptr;
    for (auto& cluster : clusters) {
      if (similarity(cluster.representative().text, claim.text) >= threshold) {
        home = &cluster;
        break;
      }
    }
    if (home == nullptr) {
      clusters.push_back(ClaimCluster{std::string(id_prefix) + std::to_string(first_index + clusters.size()),
                                      claim.section,
                                      {},
                                      {}});
      home = &clusters.back();
    }
    home->members.push_back(claim);
    auto& ids = home->supporters;
    if (!std::binary_search(ids.begin(), ids.end(), claim.model_id)) {
      ids.insert(std::lower_bound(ids.begin(), ids.end(), claim.model_id), claim.model_id);
    }
  }
  return clusters;
}

std::optional<std::string> majority_winner(const Tally& tally) {
  if (tally.empty() || tied_at_top(tally)) return std::nullopt;
  const std::size_t top = top_count(tally);
  for (const auto& [value, ids] : tally) {
    if (ids.size() == top) return value;
  }
  return std::nullopt;
}

std::size_t top_count(const Tally& tally) {
  std::size_t top = 0;
  for (const auto& [value, ids] : tally) top = std::max(top, ids.size());
  return top;
}

std::size_t support_of(const Tally& tally, const std::string& value) {
  auto it = tally.find(value);
  return it == tally.end() ? 0 : it->second.size();
}

ConsensusReport compute_consensus(const std::vector<CandidateOutput>& candidates, const OutputSchema& schema,
                                  const PolicySet& policies) {
  ConsensusReport report;
  report.kind = schema.kind;
  for (const auto& candidate : candidates) {
    if (report.run_id.empty()) report.run_id = candidate.run_id;
    if (!candidate.ok()) continue;
    auto payload = candidate.parsed ? candidate.parsed : parse_structured(candidate.raw_text, schema);
    if (!payload) continue;
    report.positions.emplace(candidate.model_id, std::move(*payload));
  }
  if (report.positions.empty()) throw NoComparableContent();
  for (const auto& [id, payload] : report.positions) report.ok_models.push_back(id);

  const std::size_t n_ok = report.ok_models.size();
  const std::size_t required = std::min<std::size_t>(static_cast<std::size_t>(policies.support_threshold), n_ok);
  std::size_t decided = 0;
  std::size_t agreed = 0;
  auto record_verdict = [&](const std::string& target, const FieldVerdict& verdict) {
    ++decided;
    if (verdict.agreed) {
      ++agreed;
    } else {
      report.uncertainty_flags.push_back({target, verdict.reason});
    }
  };

  switch (schema.kind) {
    case SchemaKind::single_label: {
      for (const auto& [id, payload] : report.positions) add_vote(report.label_tally, payload.label, id);
      record_verdict("label", judge_tally(report.label_tally, required));
      if (report.label_tally.size() >= 2) {
        report.conflicts.push_back({"label", positions_of(report.label_tally), ConflictKind::contradiction});
      }
      break;
    }
    case SchemaKind::labeled_items: {
      for (const auto& [id, payload] : report.positions) {
        for (const auto& [item, a] : payload.items) {
          add_vote(report.item_status_tally[item], a.status, id);
          if (a.severity) add_vote(report.item_severity_tally[item], *a.severity, id);
        }
      }
      for (const auto& item : schema.item_universe) {
        auto status_it = report.item_status_tally.find(item);
        if (status_it == report.item_status_tally.end()) continue;
        const Tally& status = status_it->second;
        record_verdict(item + ".status", judge_tally(status, required));
        if (status.size() >= 2) {
          report.conflicts.push_back({item + ".status", positions_of(status), ConflictKind::contradiction});
        }
        if (auto sev_it = report.item_severity_tally.find(item); sev_it != report.item_severity_tally.end()) {
          const Tally& severity = sev_it->second;
          record_verdict(item + ".severity", judge_tally(severity, required));
          int lo = static_cast<int>(schema.severity_scale.size());
          int hi = -1;
          for (const auto& [grade, ids] : severity) {
            const int rank = schema.severity_rank(grade);
            lo = std::min(lo, rank);
            hi = std::max(hi, rank);
          }
          if (hi - lo >= policies.severity_divergence_step) {
            report.conflicts.push_back({item + ".severity", positions_of(severity), ConflictKind::severity_divergence});
            report.uncertainty_flags.push_back({item + ".severity", "severity_divergence"});
          }
        }
        auto positions = positions_of(status);
        if (positions.size() < n_ok) {
          for (const auto& id : report.ok_models) positions.emplace(id, std::string(kOmittedPosition));
          report.conflicts.push_back({item, std::move(positions), ConflictKind::omission});
          report.uncertainty_flags.push_back({item, "omission"});
        }
      }
      break;
    }
    case SchemaKind::free_text:
    case SchemaKind::clinical_report: {
      std::vector<std::string> groups;
      if (schema.kind == SchemaKind::clinical_report) {
        groups = schema.sections;
      } else {
        groups.emplace_back();
      }
      for (const auto& group : groups) {
        std::vector<ClaimRef> claims;
        for (const auto& [id, payload] : report.positions) {
          const std::vector<std::string>* source = &payload.claims;
          if (schema.kind == SchemaKind::clinical_report) {
            source = nullptr;
            for (const auto& section : payload.sections) {
              if (section.name == group) source = &section.claims;
            }
            if (source == nullptr) continue;
          }
          for (std::size_t i = 0; i < source->size(); ++i) {
            // Punctuation-only fragments carry no comparable content.
            if (text::token_set((*source)[i]).empty()) continue;
            claims.push_back({id, i, (*source)[i], group});
          }
        }
        auto clusters = cluster_claims(claims, policies.similarity_threshold, text_similarity, report.clusters.size());
        for (auto& cluster : clusters) {
          ++decided;
          if (cluster.supporters.size() >= required) {
            ++agreed;
          } else {
            report.uncertainty_flags.push_back({cluster.id, "below_support_threshold"});
          }
          report.clusters.push_back(std::move(cluster));
        }
      }
      break;
    }
  }

  report.agreement_ratio = decided == 0 ? 0.0 : static_cast<double>(agreed) / static_cast<double>(decided);

  std::vector<std::set<std::string>> sets;
  for (const auto& id : report.ok_models) sets.push_back(assertions(report.positions.at(id)));
  report.pairwise_similarity.assign(n_ok, std::vector<double>(n_ok, 1.0));
  for (std::size_t i = 0; i < n_ok; ++i) {
    for (std::size_t j = i + 1; j < n_ok; ++j) {
      const double s = jaccard(sets[i], sets[j]);
      report.pairwise_similarity[i][j] = s;
      report.pairwise_similarity[j][i] = s;
    }
  }

  std::sort(report.conflicts.begin(), report.conflicts.end());
  std::stable_sort(report.uncertainty_flags.begin(), report.uncertainty_flags.end(),
                   [](const auto& a, const auto& b) { return a.target < b.target; });
  return report;
}

void to_json(json& j, const ClaimRef& v) {
  j = {{"model_id", v.model_id}, {"position", v.position}, {"text", v.text}, {"section", v.section}};
}

void from_json(const json& j, ClaimRef& v) {
  j.at("model_id").get_to(v.model_id);
  j.at("position").get_to(v.position);
  j.at("text").get_to(v.text);
  j.at("section").get_to(v.section);
}

void to_json(json& j, const ClaimCluster& v) {
  j = {{"id", v.id}, {"section", v.section}, {"members", v.members}, {"supporters", v.supporters}};
}

void from_json(const json& j, ClaimCluster& v) {
  j.at("id").get_to(v.id);
  j.at("section").get_to(v.section);
  j.at("members").get_to(v.members);
  j.at("supporters").get_to(v.supporters);
}

void to_json(json& j, const Conflict& v) { j = {{"target", v.target}, {"positions", v.positions}, {"kind", v.kind}}; }

void from_json(const json& j, Conflict& v) {
  j.at("target").get_to(v.target);
  j.at("positions").get_to(v.positions);
  j.at("kind").get_to(v.kind);
}

void to_json(json& j, const UncertaintyFlag& v) { j = {{"target", v.target}, {"reason", v.reason}}; }

void from_json(const json& j, UncertaintyFlag& v) {
  j.at("target").get_to(v.target);
  j.at("reason").get_to(v.reason);
}

void to_json(json& j, const ConsensusReport& v) {
  j = {{"run_id", v.run_id},
       {"kind", v.kind},
       {"ok_models", v.ok_models},
       {"positions", v.positions},
       {"label_tally", v.label_tally},
       {"item_status_tally", v.item_status_tally},
       {"item_severity_tally", v.item_severity_tally},
       {"clusters", v.clusters},
       {"pairwise_similarity", v.pairwise_similarity},
       {"agreement_ratio", v.agreement_ratio},
       {"conflicts", v.conflicts},
       {"uncertainty_flags", v.uncertainty_flags}};
}

void from_json(const json& j, ConsensusReport& v) {
  v = ConsensusReport{};
  j.at("run_id").get_to(v.run_id);
  j.at("kind").get_to(v.kind);
  j.at("ok_models").get_to(v.ok_models);
  j.at("positions").get_to(v.positions);
  j.at("label_tally").get_to(v.label_tally);
  j.at("item_status_tally").get_to(v.item_status_tally);
  j.at("item_severity_tally").get_to(v.item_severity_tally);
  j.at("clusters").get_to(v.clusters);
  j.at("pairwise_similarity").get_to(v.pairwise_similarity);
  j.at("agreement_ratio").get_to(v.agreement_ratio);
  j.at("conflicts").get_to(v.conflicts);
  j.at("uncertainty_flags").get_to(v.uncertainty_flags);
}

}  // namespace concord
