#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace dgsum;

TEST(Synthetic, DeterministicOnDisk) {
  dgsum::testing::TempDir a, b;
  const auto spec = dgsum::testing::small_spec(5);
  save_synthetic(generate_synthetic(spec), a.path());
  save_synthetic(generate_synthetic(spec), b.path());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    EXPECT_EQ(dgsum::testing::read_file(e.path()), dgsum::testing::read_file(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 3u * 14u + 2u);
}

TEST(Synthetic, DifferentSeedsDiffer) {
  const auto a = generate_synthetic(dgsum::testing::small_spec(1));
  const auto b = generate_synthetic(dgsum::testing::small_spec(2));
  EXPECT_NE(a.data.graphs, b.data.graphs);
}

TEST(Synthetic, LabelsFollowEveryRule) {
  for (auto rule : {PlantingRule::RelationDependent, PlantingRule::EmbeddingOnly, PlantingRule::StructureOnly}) {
    auto c = generate_synthetic(dgsum::testing::small_spec(3, rule));
    EXPECT_TRUE(verify_planted_labels(c)) << planting_rule_name(rule);
    EXPECT_TRUE(validate_dataset(c.data).ok()) << validate_dataset(c.data).to_string();
    int pos = 0;
    for (const auto& [id, m] : c.data.meetings) pos += m.positives();
    EXPECT_GT(pos, 0);
    // Tampering with one label must be caught.
    auto& labels = c.data.meetings.begin()->second.gold_labels;
    labels[0] = 1 - labels[0];
    EXPECT_FALSE(verify_planted_labels(c));
  }
}

TEST(Synthetic, RelationDependentNeedsBothConditions) {
  const auto c = generate_synthetic(dgsum::testing::small_spec(4));
  for (const auto& [id, m] : c.data.meetings) {
    const auto& g = c.data.graphs.at(id);
    std::vector<int> result_in(m.size(), 0);
    for (const auto& e : g.edges)
      if (e.relation == RelationType::Result) result_in[static_cast<std::size_t>(e.dst)] = 1;
    for (std::size_t v = 0; v < m.size(); ++v)
      EXPECT_EQ(m.gold_labels[v], c.mixture_a.at(id)[v] && result_in[v]);
  }
}

TEST(Synthetic, ShapeMatchesSpec) {
  const auto spec = dgsum::testing::small_spec(6);
  const auto c = generate_synthetic(spec);
  EXPECT_EQ(c.data.split.train.size(), 8u);
  EXPECT_EQ(c.data.split.validation.size(), 3u);
  EXPECT_EQ(c.data.split.test.size(), 3u);
  for (const auto& [id, g] : c.data.graphs) {
    EXPECT_GE(g.n_nodes, spec.min_nodes);
    EXPECT_LE(g.n_nodes, spec.max_nodes);
    EXPECT_EQ(c.data.embeddings.at(id).dim, 8u);
    for (const auto& e : g.edges) EXPECT_TRUE(spec.relation_distribution.contains(e.relation));
  }
}

TEST(Synthetic, InvalidSpecs) {
  auto s = dgsum::testing::small_spec(1);
  s.relation_distribution = {{RelationType::Result, 0.5}, {RelationType::Comment, 0.2}};
  EXPECT_THROW(generate_synthetic(s), ContractError);
  s = dgsum::testing::small_spec(1);
  s.relation_distribution = {{RelationType::Result, 1.5}, {RelationType::Comment, -0.5}};
  EXPECT_THROW(generate_synthetic(s), ContractError);
  s = dgsum::testing::small_spec(1);
  s.max_nodes = 5;
  EXPECT_THROW(generate_synthetic(s), ContractError);
  s = dgsum::testing::small_spec(1);
  s.n_test = 0;
  EXPECT_THROW(generate_synthetic(s), ContractError);
  EXPECT_THROW(parse_planting_rule("magic"), ArgumentError);
}

TEST(Synthetic, SpecJsonRoundTrip) {
  auto s = dgsum::testing::small_spec(9, PlantingRule::StructureOnly);
  s.margin = 2.5;
  const auto back = synthetic_spec_from_json(synthetic_spec_to_json(s));
  EXPECT_EQ(synthetic_spec_to_json(back), synthetic_spec_to_json(s));
}
