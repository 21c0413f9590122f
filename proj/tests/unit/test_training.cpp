#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace dgsum;

namespace {

ModelConfig small_model(ModelKind kind, const Dataset& d) {
  ModelConfig c;
  c.kind = kind;
  c.hidden_dim = 8;
  c.n_layers = 2;
  return with_input_dim(c, d);
}

TrainConfig quick(int epochs = 5, int patience = 5) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.patience = patience;
  t.seeds = {3};
  t.learning_rate = 0.01;
  return t;
}

const Dataset& corpus() {
  static const Dataset d = generate_synthetic(dgsum::testing::small_spec(11)).data;
  return d;
}

}  // namespace

TEST(BceLoss, HandValues) {
  EXPECT_NEAR(bce_loss(std::vector<double>{0.5}, std::vector<int>{1}, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}, 3.0), 2.0 * std::log(2.0), 1e-12);
  EXPECT_LE(bce_loss(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}, 1.0), 1e-6);
  // Clamped at 1e-7, so a confident miss is large but finite.
  EXPECT_NEAR(bce_loss(std::vector<double>{0.0}, std::vector<int>{1}, 1.0), -std::log(1e-7), 1e-6);
  EXPECT_THROW(bce_loss(std::vector<double>{0.5}, std::vector<int>{1, 0}, 1.0), ContractError);
}

TEST(BceLoss, UnitPosWeightIsPlainBce) {
  const std::vector<double> s{0.1, 0.7, 0.4, 0.9};
  const std::vector<int> y{0, 1, 1, 0};
  double plain = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) plain -= y[i] ? std::log(s[i]) : std::log(1.0 - s[i]);
  EXPECT_NEAR(bce_loss(s, y, 1.0), plain / 4.0, 1e-12);
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {0u, 1u, 2u})
    for (std::uint64_t stream = 0; stream < 50; ++stream) seen.insert(derive_seed(base, stream));
  EXPECT_EQ(seen.size(), 150u);
  EXPECT_EQ(derive_seed(5, 7), derive_seed(5, 7));
}

TEST(TrainConfig, ValidationAndJson) {
  auto t = quick();
  EXPECT_EQ(train_config_from_json(train_config_to_json(t)).seeds, t.seeds);
  t.patience = t.max_epochs + 1;
  EXPECT_THROW(check_train_config(t), ContractError);
  t = quick();
  t.seeds.clear();
  EXPECT_THROW(check_train_config(t), ContractError);
  t = quick();
  t.learning_rate = 0.0;
  EXPECT_THROW(check_train_config(t), ContractError);
  t = quick();
  t.pos_weight = 0.5;
  EXPECT_THROW(check_train_config(t), ContractError);
  TrainConfig defaults;
  EXPECT_EQ(defaults.learning_rate, 1e-3);
  EXPECT_EQ(defaults.max_epochs, 100);
  EXPECT_EQ(defaults.patience, 10);
  EXPECT_EQ(defaults.seeds.size(), 5u);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto mc = small_model(ModelKind::RGCN, corpus());
  const auto a = train(mc, quick(), corpus());
  const auto b = train(mc, quick(), corpus());
  EXPECT_EQ(train_output_to_json(a).dump(), train_output_to_json(b).dump());
}

TEST(Train, ThreadsDoNotChangeResults) {
  const auto mc = small_model(ModelKind::GCN, corpus());
  auto t = quick(3, 3);
  t.seeds = {1, 2};
  const auto serial = train(mc, t, corpus());
  t.threads = 2;
  const auto parallel = train(mc, t, corpus());
  EXPECT_EQ(train_output_to_json(serial).dump(), train_output_to_json(parallel).dump());
}

TEST(Train, PatienceZeroRunsOneEpoch) {
  const auto out = train(small_model(ModelKind::MLP, corpus()), quick(10, 0), corpus());
  ASSERT_EQ(out.runs.size(), 1u);
  EXPECT_EQ(out.runs[0].epochs_trained, 1);
  EXPECT_EQ(out.runs[0].best_epoch, 1);
}

TEST(Train, EarlyStoppingRestoresBestEpoch) {
  auto t = quick(12, 3);
  t.keep_parameters = true;
  const auto mc = small_model(ModelKind::RGCN, corpus());
  const auto out = train(mc, t, corpus());
  const auto& run = out.runs.at(0);
  ASSERT_EQ(static_cast<int>(run.val_f1.size()), run.epochs_trained);
  // best_epoch is the first epoch reaching the maximum validation F1.
  const auto best = std::max_element(run.val_f1.begin(), run.val_f1.end());
  EXPECT_EQ(run.best_epoch, static_cast<int>(best - run.val_f1.begin()) + 1);
  EXPECT_TRUE(run.epochs_trained == t.max_epochs || run.epochs_trained - run.best_epoch == t.patience);
  // The kept parameters reproduce the best validation F1.
  ASSERT_TRUE(run.parameters.has_value());
  const auto prepared = prepare_splits(corpus(), mc.kind);
  const auto val = evaluate_meetings(mc, *run.parameters, prepared.validation, 0.5, out.pos_weight, false);
  EXPECT_EQ(val.classification.f1, *best);
}

TEST(Train, EmptySplitIsContractError) {
  auto d = corpus();
  d.split.validation.clear();
  EXPECT_THROW(train(small_model(ModelKind::MLP, d), quick(), d), ContractError);
}

TEST(Train, InputDimMismatchIsContractError) {
  auto mc = small_model(ModelKind::MLP, corpus());
  mc.input_dim += 1;
  EXPECT_THROW(train(mc, quick(), corpus()), ContractError);
}

TEST(Train, DefaultPosWeightIsNegativesOverPositives) {
  long pos = 0, neg = 0;
  for (const auto& id : corpus().split.train)
    for (int y : corpus().meeting(id).gold_labels) (y ? pos : neg)++;
  EXPECT_DOUBLE_EQ(default_pos_weight(corpus()), static_cast<double>(neg) / static_cast<double>(pos));
}

TEST(Train, LossDecreasesOnPlantedData) {
  const auto out = train(small_model(ModelKind::RGCN, corpus()), quick(8, 8), corpus());
  const auto& loss = out.runs.at(0).train_loss;
  ASSERT_GE(loss.size(), 2u);
  EXPECT_LT(loss.back(), loss.front());
}

TEST(Aggregate, MeanStdAndFailures) {
  std::vector<RunResult> runs(3);
  runs[0].test.classification.f1 = 0.5;
  runs[1].test.classification.f1 = 0.7;
  runs[2].failed = true;
  const auto a = aggregate_runs(runs);
  EXPECT_EQ(a.runs, 2);
  EXPECT_EQ(a.failed, 1);
  EXPECT_NEAR(a.f1_mean, 0.6, 1e-12);
  EXPECT_NEAR(a.f1_std, std::sqrt(0.02), 1e-12);
  EXPECT_EQ(aggregate_runs({}).runs, 0);
}
