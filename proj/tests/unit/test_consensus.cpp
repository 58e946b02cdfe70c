#include <doctest.h>

#include <algorithm>
#include <random>

#include "concord/consensus.hpp"
#include "concord/error.hpp"
#include "fixtures.hpp"

using namespace concord;
using namespace concord::testing;

namespace {

OutputSchema labels(std::vector<std::string> universe) {
  OutputSchema s;
  s.kind = SchemaKind::single_label;
  s.label_universe = std::move(universe);
  s.allows_unknown = true;
  return s;
}

OutputSchema teeth() {
  OutputSchema s;
  s.kind = SchemaKind::labeled_items;
  s.item_universe = {"UL1", "UL2", "UL3"};
  s.label_universe = {"inflamed", "non-inflamed"};
  s.severity_scale = {"mild", "moderate", "severe"};
  return s;
}

std::vector<CandidateOutput> label_candidates(const std::vector<std::string>& votes, const OutputSchema& schema) {
  std::vector<CandidateOutput> out;
  for (std::size_t i = 0; i < votes.size(); ++i) out.push_back(candidate("m" + std::to_string(i + 1), "label: " + votes[i], schema));
  return out;
}

bool has_conflict(const ConsensusReport& r, const std::string& target, ConflictKind kind) {
  return std::any_of(r.conflicts.begin(), r.conflicts.end(),
                     [&](const Conflict& c) { return c.target == target && c.kind == kind; });
}

}  // namespace

TEST_CASE("unanimous labels") {
  const auto schema = labels({"A", "B"});
  const auto r = compute_consensus(label_candidates({"A", "A", "A"}, schema), schema, PolicySet{});
  CHECK(r.label_tally == Tally{{"A", {"m1", "m2", "m3"}}});
  CHECK(r.agreement_ratio == 1.0);
  CHECK(r.conflicts.empty());
  CHECK(majority_winner(r.label_tally) == "A");
}

TEST_CASE("split labels give one contradiction on the label slot") {
  const auto schema = labels({"A", "B"});
  const auto r = compute_consensus(label_candidates({"A", "A", "B"}, schema), schema, PolicySet{});
  CHECK(r.label_tally == Tally{{"A", {"m1", "m2"}}, {"B", {"m3"}}});
  REQUIRE(r.conflicts.size() == 1);
  CHECK(r.conflicts[0].kind == ConflictKind::contradiction);
  CHECK(r.conflicts[0].target == "label");
  CHECK(r.conflicts[0].positions == std::map<std::string, std::string>{{"m1", "A"}, {"m2", "A"}, {"m3", "B"}});
}

TEST_CASE("total disagreement on a single label gives agreement 0") {
  const auto schema = labels({"A", "B", "C"});
  const auto r = compute_consensus(label_candidates({"A", "B", "C"}, schema), schema, PolicySet{});
  CHECK(r.agreement_ratio == 0.0);
  CHECK_FALSE(majority_winner(r.label_tally));
}

TEST_CASE("severity gap of two grades is a divergence") {
  const auto schema = teeth();
  std::vector<CandidateOutput> c{candidate("m1", "UL1: inflamed, mild", schema),
                                 candidate("m2", "UL1: inflamed, mild", schema),
                                 candidate("m3", "UL1: inflamed, severe", schema)};
  const auto r = compute_consensus(c, schema, PolicySet{});
  CHECK(has_conflict(r, "UL1.severity", ConflictKind::severity_divergence));
  CHECK(r.item_severity_tally.at("UL1") == Tally{{"mild", {"m1", "m2"}}, {"severe", {"m3"}}});

  c[2] = candidate("m3", "UL1: inflamed, moderate", schema);
  CHECK_FALSE(has_conflict(compute_consensus(c, schema, PolicySet{}), "UL1.severity", ConflictKind::severity_divergence));
}

TEST_CASE("an item some models skip is an omission") {
  const auto schema = teeth();
  std::vector<CandidateOutput> c{candidate("m1", "UL1: inflamed\nUL2: inflamed", schema),
                                 candidate("m2", "UL1: inflamed", schema)};
  const auto r = compute_consensus(c, schema, PolicySet{});
  CHECK(has_conflict(r, "UL2", ConflictKind::omission));
  CHECK_FALSE(has_conflict(r, "UL1", ConflictKind::omission));
}

TEST_CASE("non-ok candidates are excluded; none ok is an error") {
  const auto schema = labels({"A"});
  auto c = label_candidates({"A", "A"}, schema);
  c.push_back(candidate("m3", "no grammar here", schema));
  const auto r = compute_consensus(c, schema, PolicySet{});
  CHECK(r.ok_models == std::vector<std::string>{"m1", "m2"});
  std::vector<CandidateOutput> none{candidate("m1", "nothing", schema)};
  CHECK_THROWS_AS(compute_consensus(none, schema, PolicySet{}), NoComparableContent);
}

TEST_CASE("text similarity") {
  CHECK(text_similarity("The market rose.", "the market rose") == 1.0);
  CHECK(text_similarity("a b c d", "a b e f") == doctest::Approx(2.0 / 6.0));
  CHECK(text_similarity("alpha", "beta") == 0.0);
  CHECK_THROWS_AS(text_similarity("...", "beta"), EmptyAfterNormalization);
}

TEST_CASE("claim clustering") {
  std::vector<ClaimRef> same{{"m1", 0, "Prices fell.", ""}, {"m2", 0, "prices fell", ""}};
  auto clusters = cluster_claims(same, 0.6);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].supporters == std::vector<std::string>{"m1", "m2"});

  std::vector<ClaimRef> apart{{"m1", 0, "alpha one", ""}, {"m2", 0, "beta two", ""}, {"m3", 0, "gamma three", ""}};
  CHECK(cluster_claims(apart, 0.6).size() == 3);

  // Injected similarities: (c1,c2)=0.8, (c1,c3)=0.8, (c2,c3)=0.2.
  std::vector<ClaimRef> chain{{"m1", 0, "c1", ""}, {"m2", 0, "c2", ""}, {"m3", 0, "c3", ""}};
  auto sim = [](std::string_view a, std::string_view b) {
    if (a == b) return 1.0;
    const std::string pair = a < b ? std::string(a) + std::string(b) : std::string(b) + std::string(a);
    return pair == "c2c3" ? 0.2 : 0.8;
  };
  clusters = cluster_claims(chain, 0.7, sim);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].representative().text == "c1");
  CHECK(clusters[0].members.size() == 3);
}

TEST_CASE("free text clustering and agreement") {
  OutputSchema s;
  s.kind = SchemaKind::free_text;
  std::vector<CandidateOutput> c{candidate("m1", "Storage prices fell. Heat pumps sold well.", s),
                                 candidate("m2", "Storage prices fell sharply. Hydrogen planes arrive.", s)};
  const auto r = compute_consensus(c, s, PolicySet{});
  REQUIRE(r.clusters.size() == 3);
  CHECK(r.clusters[0].supporters == std::vector<std::string>{"m1", "m2"});
  CHECK(r.pairwise_similarity.size() == 2);
  CHECK(r.pairwise_similarity[0][1] == r.pairwise_similarity[1][0]);
  CHECK(r.pairwise_similarity[0][0] == 1.0);
}

TEST_CASE("order independence over permuted candidates") {
  const auto schema = teeth();
  std::mt19937_64 rng(5);
  const std::vector<std::string> statuses{"inflamed", "non-inflamed"};
  const std::vector<std::string> grades{"mild", "moderate", "severe"};
  for (int round = 0; round < 100; ++round) {
    std::vector<CandidateOutput> c;
    for (int m = 0; m < 4; ++m) {
      std::string text;
      for (const auto& item : schema.item_universe) {
        if (rng() % 4 == 0) continue;
        text += item + ": " + statuses[rng() % 2] + ", " + grades[rng() % 3] + "\n";
      }
      if (text.empty()) text = "UL1: inflamed\n";
      c.push_back(candidate("m" + std::to_string(m + 1), text, schema));
    }
    const auto base = compute_consensus(c, schema, PolicySet{});
    std::shuffle(c.begin(), c.end(), rng);
    CHECK(compute_consensus(c, schema, PolicySet{}) == base);
  }
}
