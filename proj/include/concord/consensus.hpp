#pragma once

// Cross-candidate agreement structure. Everything here is a pure function of
// its inputs and iterates models in sorted model_id order, so results do not
// depend on the order candidates arrived in.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concord/serialize.hpp"
#include "concord/types.hpp"

namespace concord {

// value -> sorted ids of the models that expressed it
using Tally = std::map<std::string, std::vector<std::string>>;

// Token-set Jaccard over normalize()d text. Throws EmptyAfterNormalization
// when either side has no tokens.
double text_similarity(std::string_view a, std::string_view b);

struct ClaimRef {
  std::string model_id;
  std::size_t position = 0;
  std::string text;
  std::string section;

  bool operator==(const ClaimRef&) const = default;
};

struct ClaimCluster {
  std::string id;
  std::string section;
  // First member is the representative.
  std::vector<ClaimRef> members;
  std::vector<std::string> supporters;

  const ClaimRef& representative() const { return members.front(); }
  bool operator==(const ClaimCluster&) const = default;
};

using SimilarityFn = std::function<double(std::string_view, std::string_view)>;

// Greedy representative-based clustering. Claims are visited in the given
// order; each joins the first existing cluster whose representative has
// similarity >= threshold with it, otherwise it founds a new cluster. Cluster
// ids are id_prefix + creation index, counting from first_index.
std::vector<ClaimCluster> cluster_claims(const std::vector<ClaimRef>& claims, double threshold,
                                         const SimilarityFn& similarity = text_similarity,
                                         std::size_t first_index = 0, std::string_view id_prefix = "c");

enum class ConflictKind { contradiction, severity_divergence, omission };

NLOHMANN_JSON_SERIALIZE_ENUM(ConflictKind, {{ConflictKind::contradiction, "contradiction"},
                                            {ConflictKind::severity_divergence, "severity_divergence"},
                                            {ConflictKind::omission, "omission"}})

inline constexpr std::string_view kOmittedPosition = "<omitted>";

struct Conflict {
  std::string target;
  std::map<std::string, std::string> positions;
  ConflictKind kind = ConflictKind::contradiction;

  bool operator==(const Conflict&) const = default;
  bool operator<(const Conflict& other) const;
};

struct UncertaintyFlag {
  std::string target;
  std::string reason;

  bool operator==(const UncertaintyFlag&) const = default;
};

struct ConsensusReport {
  std::string run_id;
  SchemaKind kind = SchemaKind::free_text;
  // Candidates with status ok and a parsed payload, sorted.
  std::vector<std::string> ok_models;
  std::map<std::string, StructuredPayload> positions;
  Tally label_tally;
  std::map<std::string, Tally> item_status_tally;
  std::map<std::string, Tally> item_severity_tally;
  std::vector<ClaimCluster> clusters;
  // Indexed like ok_models.
  std::vector<std::vector<double>> pairwise_similarity;
  double agreement_ratio = 0.0;
  std::vector<Conflict> conflicts;
  std::vector<UncertaintyFlag> uncertainty_flags;

  bool operator==(const ConsensusReport&) const = default;
};

// Unique top value of a tally, or nullopt on a tie or an empty tally.
std::optional<std::string> majority_winner(const Tally& tally);
std::size_t top_count(const Tally& tally);
std::size_t support_of(const Tally& tally, const std::string& value);

// Throws NoComparableContent when no candidate is ok with a payload.
ConsensusReport compute_consensus(const std::vector<CandidateOutput>& candidates, const OutputSchema& schema,
                                  const PolicySet& policies);

void to_json(json& j, const ClaimRef& v);
void from_json(const json& j, ClaimRef& v);
void to_json(json& j, const ClaimCluster& v);
void from_json(const json& j, ClaimCluster& v);
void to_json(json& j, const Conflict& v);
void from_json(const json& j, Conflict& v);
void to_json(json& j, const UncertaintyFlag& v);
void from_json(const json& j, UncertaintyFlag& v);
void to_json(json& j, const ConsensusReport& v);
void from_json(const json& j, ConsensusReport& v);

}  // namespace concord
