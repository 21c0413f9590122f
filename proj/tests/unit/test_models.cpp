#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace dgsum;
using namespace dgsum::ad;
using dgsum::testing::random_graph;
using dgsum::testing::random_matrix;
using R = RelationType;

namespace {

ModelConfig config(ModelKind kind, int input_dim, int hidden, int layers = 3) {
  ModelConfig c;
  c.kind = kind;
  c.input_dim = input_dim;
  c.hidden_dim = hidden;
  c.n_layers = layers;
  return c;
}

std::vector<Tensor> identity_rgcn_weights(Tape& t, int d) {
  std::vector<Tensor> w;
  for (std::size_t r = 0; r < kNumEffectiveRelations; ++r) w.push_back(t.constant(Matrix::Identity(d, d)));
  return w;
}

std::vector<double> scores_of(const ModelConfig& c, const ParameterSet& ps, const Matrix& h0,
                              const DiscourseGraph& g) {
  const auto ops = build_operators(g, c.kind);
  return predict(c, ps, h0, uses_graph(c.kind) ? &ops : nullptr);
}

}  // namespace

TEST(ModelConfig, Validation) {
  auto c = config(ModelKind::MixHop, 4, 8);
  EXPECT_NO_THROW(check_config(c));
  c.hop_set = {};
  EXPECT_THROW(check_config(c), ContractError);
  c.hop_set = {0, 2, 1};
  EXPECT_THROW(check_config(c), ContractError);
  c.hop_set = {0, 0};
  EXPECT_THROW(check_config(c), ContractError);
  c.hop_set = {-1, 0};
  EXPECT_THROW(check_config(c), ContractError);
  auto d = config(ModelKind::RGCN, 4, 8, 0);
  EXPECT_THROW(check_config(d), ContractError);
  d = config(ModelKind::RGCN, 4, 0);
  EXPECT_THROW(check_config(d), ContractError);
  d = config(ModelKind::RGCN, 0, 8);
  EXPECT_THROW(check_config(d), ContractError);
  EXPECT_THROW(parse_model_kind("Transformer"), ParseError);
  EXPECT_EQ(parse_model_kind("mixhop"), ModelKind::MixHop);
}

TEST(ModelConfig, JsonRoundTripAndDefaults) {
  ModelConfig defaults;
  EXPECT_EQ(defaults.kind, ModelKind::RGCN);
  EXPECT_EQ(defaults.n_layers, 3);
  EXPECT_EQ(defaults.hidden_dim, 128);
  EXPECT_EQ(defaults.hop_set, (std::vector<int>{0, 1, 2}));
  auto c = config(ModelKind::MixHop, 7, 5, 2);
  c.hop_set = {0, 3};
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_THROW(config_from_json(nlohmann::json{{"n_layers", "three"}}), ParseError);
}

TEST(Parameters, LayoutPerKind) {
  EXPECT_EQ(make_parameters(config(ModelKind::LogReg, 4, 8)).size(), 2u);
  EXPECT_EQ(make_parameters(config(ModelKind::MLP, 4, 8)).size(), 3u * 2 + 2);
  EXPECT_EQ(make_parameters(config(ModelKind::GCN, 4, 8)).size(), 3u + 2);
  const auto rgcn = make_parameters(config(ModelKind::RGCN, 4, 8));
  EXPECT_EQ(rgcn.size(), 3u * 37 + 2);
  EXPECT_EQ(rgcn.at("layer0.Result.fwd").rows(), 4);
  EXPECT_EQ(rgcn.at("layer2.SelfLoop").cols(), 8);
  EXPECT_NO_THROW(rgcn.at("layer1.Unknown.inv"));
  auto mix = config(ModelKind::MixHop, 4, 128);
  EXPECT_EQ(layer_output_widths(mix), (std::vector<int>{384, 384, 384}));
  const auto mp = make_parameters(mix);
  EXPECT_EQ(mp.at("layer1.hop2").rows(), 384);
  EXPECT_EQ(mp.at("head.weight").rows(), 384);
}

TEST(Parameters, EffectiveRelationIds) {
  std::set<std::size_t> ids;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    ids.insert(forward_relation_id(relation_from_index(r)));
    ids.insert(inverse_relation_id(relation_from_index(r)));
  }
  EXPECT_EQ(ids.size(), 36u);
  EXPECT_FALSE(ids.contains(kSelfLoopRelation));
  EXPECT_EQ(effective_relation_name(kSelfLoopRelation), "SelfLoop");
  EXPECT_EQ(effective_relation_name(forward_relation_id(R::Result)), "Result.fwd");
}

TEST(Parameters, InitIsSeededGlorot) {
  const auto c = config(ModelKind::RGCN, 6, 10);
  const auto a = init_parameters(c, 5);
  const auto b = init_parameters(c, 5);
  const auto other = init_parameters(c, 6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
  EXPECT_NE(a.at("layer0.SelfLoop"), other.at("layer0.SelfLoop"));
  const double limit = std::sqrt(6.0 / 16.0);
  EXPECT_LE(a.at("layer0.SelfLoop").cwiseAbs().maxCoeff(), limit);
  const auto mlp = init_parameters(config(ModelKind::MLP, 6, 10), 1);
  EXPECT_TRUE(mlp.at("layer0.bias").isZero());
  EXPECT_TRUE(mlp.at("head.bias").isZero());
}

TEST(Parameters, MismatchIsContractError) {
  const auto c = config(ModelKind::GCN, 3, 4);
  const auto wrong = init_parameters(config(ModelKind::GCN, 3, 5), 0);
  DiscourseGraph g{"g", 2, {{0, 1, R::Result}}};
  EXPECT_THROW(scores_of(c, wrong, Matrix::Ones(2, 3), g), ContractError);
  EXPECT_THROW(scores_of(c, init_parameters(c, 0), Matrix::Ones(2, 4), g), ContractError);
  const auto ps = init_parameters(c, 0);
  EXPECT_THROW(predict(c, ps, Matrix::Ones(2, 3), nullptr), ContractError);
}

TEST(Rgcn, TwoNodeHandExample) {
  // Edge a -> b labelled Result, every W the identity.
  Tape t;
  DiscourseGraph g{"g", 2, {{0, 1, R::Result}}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  const auto w = identity_rgcn_weights(t, 2);
  const auto out = rgcn_layer_forward(t.constant(Matrix::Identity(2, 2)), ops, w);
  EXPECT_EQ(out.value(), Matrix::Ones(2, 2));
}

TEST(Rgcn, DirectionsUseSeparateWeights) {
  Tape t;
  DiscourseGraph g{"g", 2, {{0, 1, R::Result}}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  std::vector<Tensor> w;
  for (std::size_t r = 0; r < kNumEffectiveRelations; ++r) w.push_back(t.constant(Matrix::Zero(2, 2)));
  w[forward_relation_id(R::Result)] = t.constant(Matrix::Identity(2, 2) * 2.0);
  w[inverse_relation_id(R::Result)] = t.constant(Matrix::Identity(2, 2) * 3.0);
  Matrix h(2, 2);
  h << 1, 0, 0, 1;
  const auto out = rgcn_layer_forward(t.constant(h), ops, w).value();
  // Node b (row 1) sees a through the forward relation, node a sees b through the inverse.
  EXPECT_EQ(out.row(1), (Eigen::RowVector2d(2, 0)));
  EXPECT_EQ(out.row(0), (Eigen::RowVector2d(0, 3)));
}

TEST(Rgcn, ZeroEdgeGraphIsSelfTransform) {
  std::mt19937_64 rng(1);
  Tape t;
  DiscourseGraph g{"g", 5, {}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  std::vector<Tensor> w;
  for (std::size_t r = 0; r < kNumEffectiveRelations; ++r) w.push_back(t.constant(random_matrix(3, 4, rng)));
  const Matrix h = random_matrix(5, 3, rng);
  const auto out = rgcn_layer_forward(t.constant(h), ops, w).value();
  EXPECT_TRUE(out.isApprox(Matrix((h * w[kSelfLoopRelation].value()).cwiseMax(0.0))));
}

TEST(Rgcn, MeanOverRelationNeighbourhood) {
  // Node 2 has two incoming Result edges: it averages them rather than summing.
  Tape t;
  DiscourseGraph g{"g", 3, {{0, 2, R::Result}, {1, 2, R::Result}}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  std::vector<Tensor> w;
  for (std::size_t r = 0; r < kNumEffectiveRelations; ++r) w.push_back(t.constant(Matrix::Zero(1, 1)));
  w[forward_relation_id(R::Result)] = t.constant(Matrix::Ones(1, 1));
  Matrix h(3, 1);
  h << 2, 4, 100;
  EXPECT_DOUBLE_EQ(rgcn_layer_forward(t.constant(h), ops, w).value()(2, 0), 3.0);
}

TEST(Rgcn, ShapeErrors) {
  Tape t;
  DiscourseGraph g{"g", 3, {{0, 1, R::Result}}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  const auto w = identity_rgcn_weights(t, 2);
  EXPECT_THROW(rgcn_layer_forward(t.constant(Matrix::Ones(2, 2)), ops, w), ShapeError);
  EXPECT_THROW(rgcn_layer_forward(t.constant(Matrix::Ones(3, 3)), ops, w), ShapeError);
  std::vector<Tensor> few(w.begin(), w.begin() + 3);
  EXPECT_THROW(rgcn_layer_forward(t.constant(Matrix::Ones(3, 2)), ops, few), ContractError);
}

TEST(Gcn, IsolatedNodeIdentity) {
  Tape t;
  DiscourseGraph g{"g", 1, {}};
  const auto ops = build_operators(g, ModelKind::GCN);
  Matrix h(1, 3);
  h << -1, 0.5, 2;
  const auto out = gcn_layer_forward(t.constant(h), ops, t.constant(Matrix::Identity(3, 3)));
  EXPECT_EQ(out.value(), Matrix(h.cwiseMax(0.0)));
}

TEST(Gcn, ThreeNodePathAgainstHandValues) {
  DiscourseGraph g{"g", 3, {{0, 1, R::Result}, {1, 2, R::Comment}}};
  const Matrix sparse = Matrix(*normalized_adjacency(g));
  // Degrees with self-loops are 2, 3, 2.
  Matrix expected(3, 3);
  const double a = 1.0 / 2.0, b = 1.0 / std::sqrt(6.0), c = 1.0 / 3.0;
  expected << a, b, 0, b, c, b, 0, b, a;
  EXPECT_TRUE(sparse.isApprox(expected, 1e-15));
  EXPECT_TRUE(normalized_adjacency_dense(g).isApprox(expected, 1e-15));
}

TEST(Gcn, SparseMatchesDenseOnRandomGraphs) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto g = random_graph(15, 30, 4, rng);
    EXPECT_LT((Matrix(*normalized_adjacency(g)) - normalized_adjacency_dense(g)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(MixHop, HopZeroIgnoresGraph) {
  std::mt19937_64 rng(3);
  Tape t;
  const Matrix h = random_matrix(4, 3, rng), w = random_matrix(3, 2, rng);
  const std::vector<int> hops{0};
  std::vector<Tensor> ws{t.constant(w)};
  for (const auto& g : {DiscourseGraph{"a", 4, {}}, DiscourseGraph{"b", 4, {{0, 1, R::Result}, {2, 3, R::Comment}}}}) {
    const auto ops = build_operators(g, ModelKind::MixHop);
    EXPECT_TRUE(mixhop_layer_forward(t.constant(h), ops, ws, hops).value().isApprox(Matrix((h * w).cwiseMax(0.0))));
  }
}

TEST(MixHop, OutputWidthIsHopsTimesHidden) {
  std::mt19937_64 rng(4);
  const auto c = config(ModelKind::MixHop, 6, 128, 3);
  const auto g = random_graph(10, 20, 4, rng);
  const auto ops = build_operators(g, ModelKind::MixHop);
  const auto ps = init_parameters(c, 1);
  Tape t;
  auto bound = bind_parameters(t, ps, false);
  EXPECT_EQ(model_hidden(c, bound, t.constant(random_matrix(10, 6, rng)), &ops).cols(), 384);
}

TEST(MixHop, PowersAgainstDenseOracle) {
  std::mt19937_64 rng(5);
  const auto g = random_graph(8, 12, 3, rng);
  const auto ops = build_operators(g, ModelKind::MixHop);
  const Matrix a = normalized_adjacency_dense(g);
  const Matrix h = random_matrix(8, 3, rng);
  const Matrix w0 = random_matrix(3, 2, rng), w1 = random_matrix(3, 2, rng), w3 = random_matrix(3, 2, rng);
  Tape t;
  std::vector<Tensor> ws{t.constant(w0), t.constant(w1), t.constant(w3)};
  const std::vector<int> hops{0, 1, 3};
  const auto out = mixhop_layer_forward(t.constant(h), ops, ws, hops, false).value();
  Matrix expected(8, 6);
  expected << h * w0, a * h * w1, a * a * a * h * w3;
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MixHop, NormalizedPowersFixDegreeVector) {
  // D^-1/2 (A+I) D^-1/2 maps d^1/2 to itself, so every power does too. Row sums are 1
  // only on regular graphs, checked on a cycle.
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto g = random_graph(12, 20, 2, rng);
    const Matrix a = normalized_adjacency_dense(g);
    const auto nbrs = undirected_neighbors(g);
    Eigen::VectorXd s(12);
    for (int i = 0; i < 12; ++i) s(i) = std::sqrt(static_cast<double>(nbrs[static_cast<std::size_t>(i)].size() + 1));
    EXPECT_LT((a * s - s).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a * a * s - s).cwiseAbs().maxCoeff(), 1e-12);
  }
  DiscourseGraph cycle{"c", 7, {}};
  for (int i = 0; i < 7; ++i) cycle.edges.push_back({i, (i + 1) % 7, R::Result});
  const Matrix a = normalized_adjacency_dense(cycle);
  const Matrix a2 = a * a;
  for (int i = 0; i < 7; ++i) {
    EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
    EXPECT_NEAR(a2.row(i).sum(), 1.0, 1e-6);
  }
}

TEST(Model, LogRegWithZeroWeightsGivesHalf) {
  const auto c = config(ModelKind::LogReg, 5, 8);
  const auto ps = make_parameters(c);
  std::mt19937_64 rng(7);
  for (double s : predict(c, ps, random_matrix(6, 5, rng), nullptr)) EXPECT_EQ(s, 0.5);
}

TEST(Model, MlpIgnoresGraph) {
  const auto c = config(ModelKind::MLP, 5, 8);
  const auto ps = init_parameters(c, 3);
  std::mt19937_64 rng(8);
  const Matrix h = random_matrix(10, 5, rng);
  const auto g = random_graph(10, 20, 16, rng);
  const auto base = scores_of(c, ps, h, g);
  EXPECT_EQ(scores_of(c, ps, h, mask_relations(g, {})), base);
  EXPECT_EQ(scores_of(c, ps, h, hide_edges(g, 1.0, 1)), base);
  EXPECT_EQ(scores_of(c, ps, h, randomize_relations(g, 2)), base);
}

TEST(Model, ScoresStrictlyInsideUnitIntervalAndMonotoneInHeadBias) {
  std::mt19937_64 rng(9);
  for (auto kind : {ModelKind::LogReg, ModelKind::MLP, ModelKind::GCN, ModelKind::RGCN, ModelKind::MixHop}) {
    const auto c = config(kind, 4, 6, 2);
    auto ps = init_parameters(c, 4);
    const Matrix h = random_matrix(9, 4, rng, 3.0);
    const auto g = random_graph(9, 15, 16, rng);
    const auto low = scores_of(c, ps, h, g);
    ps.at("head.bias")(0, 0) += 0.7;
    const auto high = scores_of(c, ps, h, g);
    ASSERT_EQ(low.size(), 9u) << model_kind_name(kind);
    for (std::size_t i = 0; i < low.size(); ++i) {
      EXPECT_GT(low[i], 0.0);
      EXPECT_LT(low[i], 1.0);
      EXPECT_GE(high[i], low[i]);
    }
  }
}

TEST(Model, MaskedRelationsChangeTrainedScores) {
  // Result edges carry a large positive forward weight; masking them to Unknown (zero
  // weight) must change the score of the node they point to.
  auto c = config(ModelKind::RGCN, 1, 1, 1);
  auto ps = make_parameters(c);
  ps.at("layer0.SelfLoop")(0, 0) = 0.1;
  ps.at("layer0.Result.fwd")(0, 0) = 5.0;
  ps.at("head.weight")(0, 0) = 1.0;
  ps.at("head.bias")(0, 0) = -1.0;
  DiscourseGraph g{"g", 3, {{0, 1, R::Result}, {1, 2, R::Comment}}};
  const Matrix h = Matrix::Ones(3, 1);
  const auto labelled = scores_of(c, ps, h, g);
  const auto masked = scores_of(c, ps, h, mask_relations(g, {}));
  EXPECT_GT(labelled[1], 0.9);
  EXPECT_LT(masked[1], 0.5);
  EXPECT_EQ(labelled[0], masked[0]);
}

TEST(Model, FullyMaskedRgcnDependsOnlyOnStructure) {
  std::mt19937_64 rng(10);
  const auto c = config(ModelKind::RGCN, 4, 6, 2);
  const auto ps = init_parameters(c, 2);
  for (int t = 0; t < 10; ++t) {
    const auto g = random_graph(10, 18, 16, rng);
    const Matrix h = random_matrix(10, 4, rng);
    const auto a = scores_of(c, ps, h, mask_relations(g, {}));
    const auto b = scores_of(c, ps, h, mask_relations(randomize_relations(g, static_cast<std::uint64_t>(t)), {}));
    EXPECT_EQ(a, b);
  }
}

TEST(Model, ShapesForAllKinds) {
  std::mt19937_64 rng(11);
  for (auto kind : {ModelKind::LogReg, ModelKind::MLP, ModelKind::GCN, ModelKind::RGCN, ModelKind::MixHop}) {
    for (int layers : {1, 2, 3}) {
      auto c = config(kind, 5, 7, layers);
      const auto ps = init_parameters(c, 1);
      const int n = 4 + layers;
      const auto g = random_graph(n, 2 * n, 16, rng);
      const auto ops = build_operators(g, kind);
      Tape t;
      auto bound = bind_parameters(t, ps, false);
      const auto h0 = t.constant(random_matrix(n, 5, rng));
      const auto hidden = model_hidden(c, bound, h0, &ops);
      EXPECT_EQ(hidden.rows(), n);
      EXPECT_EQ(hidden.cols(), head_input_dim(c));
      const auto out = model_forward(c, bound, h0, &ops);
      EXPECT_EQ(out.rows(), n);
      EXPECT_EQ(out.cols(), 1);
    }
  }
}

TEST(Model, PermutationEquivariance) {
  std::mt19937_64 rng(12);
  for (auto kind : {ModelKind::GCN, ModelKind::RGCN, ModelKind::MixHop}) {
    const auto c = config(kind, 4, 8, 3);
    const auto ps = init_parameters(c, 7);
    for (int t = 0; t < 5; ++t) {
      const int n = 12;
      const auto g = random_graph(n, 25, 16, rng);
      const Matrix h = random_matrix(n, 4, rng);
      const auto perm = dgsum::testing::random_permutation(n, rng);
      const auto base = scores_of(c, ps, h, g);
      const auto moved = scores_of(c, ps, dgsum::testing::permute_rows(h, perm), dgsum::testing::permute_graph(g, perm));
      for (int i = 0; i < n; ++i) EXPECT_NEAR(moved[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])], base[static_cast<std::size_t>(i)], 1e-9);
    }
  }
}

TEST(Model, RgcnGradientCheckFiveNodes) {
  std::mt19937_64 rng(13);
  const auto c = config(ModelKind::RGCN, 3, 4, 3);
  const DiscourseGraph g{"g", 5, {{0, 1, R::Result}, {1, 2, R::Comment}, {3, 2, R::Result}, {4, 0, R::Elaboration},
                                  {2, 4, R::Acknowledgement}, {1, 3, R::Comment}}};
  const auto ops = build_operators(g, ModelKind::RGCN);
  const Matrix h0 = random_matrix(5, 3, rng);
  const std::vector<double> y{1, 0, 1, 0, 0};
  const auto layout = init_parameters(c, 21);
  std::vector<Matrix> inputs;
  for (const auto& p : layout) inputs.push_back(p.value);
  const double err = finite_diff_check(
      [&](Tape& t, std::span<const Tensor> leaves) {
        BoundParameters b{&layout, {leaves.begin(), leaves.end()}};
        return bce(model_forward(c, b, t.constant(h0), &ops), y, 2.0);
      },
      inputs, 1e-4);
  EXPECT_LT(err, 1e-3);
}

TEST(Checkpoint, RoundTripKeepsFloatValues) {
  dgsum::testing::TempDir dir;
  for (auto kind : {ModelKind::LogReg, ModelKind::MLP, ModelKind::GCN, ModelKind::RGCN, ModelKind::MixHop}) {
    const auto c = config(kind, 3, 4, 2);
    const auto ps = init_parameters(c, 8);
    const auto path = dir / std::string(model_kind_name(kind));
    save_checkpoint(path, c, ps, 8);
    const auto ck = load_checkpoint(path);
    EXPECT_EQ(ck.config, c);
    EXPECT_EQ(ck.seed, 8u);
    ASSERT_EQ(ck.params.size(), ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      EXPECT_EQ(ck.params[i].name, ps[i].name);
      EXPECT_EQ(ck.params[i].value, ps[i].value.cast<float>().cast<double>());
    }
    const auto manifest = read_json_file(path / "manifest.json");
    if (kind == ModelKind::RGCN) {
      EXPECT_EQ(manifest["relations"].size(), kNumEffectiveRelations);
      EXPECT_EQ(manifest["relations"][36]["name"], "SelfLoop");
    }
  }
}

TEST(Checkpoint, CorruptManifestIsRejected) {
  dgsum::testing::TempDir dir;
  const auto c = config(ModelKind::GCN, 3, 4, 2);
  save_checkpoint(dir.path(), c, init_parameters(c, 1), 1);
  auto manifest = read_json_file(dir / "manifest.json");
  manifest["model"]["hidden_dim"] = 5;
  dgsum::testing::write_file(dir / "manifest.json", manifest.dump());
  EXPECT_THROW(load_checkpoint(dir.path()), ShapeError);
  EXPECT_THROW(load_checkpoint(dir / "nope"), ParseError);
}
