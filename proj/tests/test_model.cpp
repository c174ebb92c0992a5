/*
 * Copyright 2026 The temporec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "temporec/error.hpp"
#include "temporec/fusion.hpp"
#include "temporec/kernels.hpp"
#include "temporec/model.hpp"

namespace temporec {
namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return v;
}

ScorerParams random_params(const ModelShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.8);
  ScorerParams p(shape);
  for (double& w : p.flat()) w = g(rng);
  return p;
}

// Hand-built split: every user has `per_user` train items; the rest of the
// catalog is the negative pool.
IndexedSplit toy_split(std::size_t n_users, std::size_t n_items, std::size_t per_user,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  IndexedSplit s;
  s.n_items = n_items;
  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<std::uint32_t> all(n_items);
    for (std::uint32_t i = 0; i < n_items; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<std::uint32_t> train(all.begin(), all.begin() + per_user);
    std::vector<std::uint32_t> val = {all[per_user]};
    std::vector<std::uint32_t> test = {all[per_user + 1]};
    std::vector<std::uint32_t> pool(all.begin() + per_user + 2, all.end());
    std::sort(pool.begin(), pool.end());
    auto seen = train;
    std::sort(seen.begin(), seen.end());
    auto tv = seen;
    tv.push_back(val[0]);
    std::sort(tv.begin(), tv.end());
    s.train.push_back(train);
    s.validation.push_back(val);
    s.test.push_back(test);
    s.train_seen.push_back(seen);
    s.train_val_seen.push_back(tv);
    s.negative_pool.push_back(pool);
  }
  return s;
}

UserFeatures random_features(std::size_t n_users, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  UserFeatures f{Matrix(n_users, d), Matrix(n_users, d), Matrix(n_users, d)};
  for (auto* m : {&f.short_term, &f.long_term, &f.general}) {
    for (double& x : m->flat()) x = g(rng);
  }
  return f;
}

Matrix random_items(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (double& x : m.flat()) x = g(rng);
  return m;
}

TEST(MlpForward, ZeroParamsGiveOneHalf) {
  ScorerParams p(ModelShape{4, 3, ScoringVariant::kFull});
  std::mt19937_64 rng(1);
  EXPECT_EQ(mlp_forward(gaussian(rng, 4), gaussian(rng, 4), p).y_hat, 0.5);
}

TEST(MlpForward, AllOnesMaskMatchesInference) {
  const auto p = random_params({4, 3, ScoringVariant::kFull}, 2);
  std::mt19937_64 rng(2);
  const auto eu = gaussian(rng, 4), ei = gaussian(rng, 4);
  const std::vector<double> ones(3, 1.0);
  EXPECT_EQ(mlp_forward(eu, ei, p, ones).y_hat, mlp_forward(eu, ei, p).y_hat);
}

TEST(MlpForward, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelShape shape{4, 3, ScoringVariant::kShortOnly};
    const auto p = random_params(shape, seed);
    const auto f = random_features(1, 4, seed + 100);
    const auto items = random_items(1, 4, seed + 200);
    const double lib = mlp_forward(f.short_term.row(0), items.row(0), p).y_hat;
    EXPECT_NEAR(lib, oracle::forward(p, f, items, 0, 0, {}), 1e-12);
  }
}

TEST(MlpForward, DropoutMaskApplied) {
  const auto p = random_params({4, 3, ScoringVariant::kShortOnly}, 5);
  const auto f = random_features(1, 4, 6);
  const auto items = random_items(1, 4, 7);
  const std::vector<double> mask = {0.0, 2.0, 2.0};
  EXPECT_NEAR(mlp_forward(f.short_term.row(0), items.row(0), p, mask).y_hat,
              oracle::forward(p, f, items, 0, 0, mask), 1e-12);
}

TEST(MlpForward, WrongDimensionsRejected) {
  ScorerParams p(ModelShape{4, 3, ScoringVariant::kFull});
  EXPECT_THROW(mlp_forward(std::vector<double>(3), std::vector<double>(4), p), ConfigError);
  EXPECT_THROW(mlp_forward(std::vector<double>(4), std::vector<double>(4), p, std::vector<double>(2)),
               ConfigError);
}

TEST(BceLoss, KnownValues) {
  EXPECT_NEAR(bce_loss(0.5, 1), 0.693147, 1e-6);
  EXPECT_NEAR(bce_loss(1.0, 0), 16.118, 1e-3);
  EXPECT_NEAR(bce_loss(1.0, 0), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(bce_loss(1.0 - 1e-7, 1), 1e-7, 1e-9);
  EXPECT_TRUE(std::isfinite(bce_loss(0.0, 1)));
}

TEST(BatchGradient, TinyNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = oracle::smooth_instance(seed, 3, 2, ScoringVariant::kFull, 4, false);
    const auto serial = oracle::check_gradient(in, kernels::batch_gradient_serial);
    const auto parallel = oracle::check_gradient(in, kernels::batch_gradient);
    EXPECT_LT(serial.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LT(parallel.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LT(serial.loss_gap, 1e-12);
  }
}

TEST(BatchGradient, EveryVariantWithDropout) {
  for (auto v : {ScoringVariant::kFull, ScoringVariant::kShortOnly, ScoringVariant::kLongOnly,
                 ScoringVariant::kGeneralOnly, ScoringVariant::kDotProduct}) {
    const bool dropout = v != ScoringVariant::kDotProduct;
    const auto in = oracle::smooth_instance(31, 5, 4, v, 70, dropout);
    const auto r = oracle::check_gradient(in, kernels::batch_gradient);
    EXPECT_LT(r.max_rel_error, 1e-4) << to_string(v);
    EXPECT_LT(r.loss_gap, 1e-12) << to_string(v);
  }
}

TEST(BatchGradient, MaskedUnitHasZeroLayerOneGradient) {
  auto in = oracle::random_instance(8, 3, 4, ScoringVariant::kFull, 16, true);
  for (std::size_t e = 0; e < in.batch.size(); ++e) in.keep[e * 4 + 2] = 0;
  ScorerParams grad;
  kernels::batch_gradient(in.params, in.features, in.items, {in.batch, in.keep, in.dropout_rate}, grad);
  for (double g : grad.w1_row(2)) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(grad.b1()[2], 0.0);
  EXPECT_EQ(grad.w2()[2], 0.0);
}

TEST(BatchGradient, SaturatedCorrectPredictionsGiveTinyGradients) {
  auto in = oracle::random_instance(9, 3, 2, ScoringVariant::kFull, 8, false);
  for (auto& e : in.batch) e.label = 1;
  std::fill(in.params.w2().begin(), in.params.w2().end(), 0.0);
  in.params.b2() = 40.0;
  ScorerParams grad;
  kernels::batch_gradient(in.params, in.features, in.items, {in.batch, {}, 0.0}, grad);
  for (double g : grad.flat()) EXPECT_LT(std::abs(g), 1e-15);
}

TEST(BatchGradient, DotProductIgnoresMlpWeights) {
  const auto in = oracle::random_instance(10, 4, 3, ScoringVariant::kDotProduct, 8, false);
  ScorerParams grad;
  kernels::batch_gradient(in.params, in.features, in.items, {in.batch, {}, 0.0}, grad);
  for (double g : grad.w1()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(grad.b2(), 0.0);
  double wa = 0.0;
  for (double g : grad.w_a()) wa += std::abs(g);
  EXPECT_GT(wa, 0.0);
}

TEST(AdamStep, ZeroGradientIsFixedPoint) {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const auto before = p;
  AdamState st(3);
  TrainConfig cfg;
  adam_step(p, std::vector<double>(3, 0.0), st, cfg);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 1u);
}

TEST(AdamStep, FirstStepIsLearningRateTimesSign) {
  std::vector<double> p = {0.0, 0.0, 0.0};
  const std::vector<double> g = {0.3, -4.0, 1e-3};
  AdamState st(3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step(p, g, st, cfg);
  // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps).
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(p[k], -0.01 * g[k] / (std::abs(g[k]) + 1e-8), 1e-15);
    EXPECT_NEAR(p[k], -0.01 * (g[k] > 0 ? 1 : -1), 1e-6);
  }
}

TEST(AdamStep, TwoRunsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> p(10, 0.5);
    AdamState st(10);
    TrainConfig cfg;
    for (int s = 0; s < 10; ++s) {
      std::vector<double> grad(10);
      for (double& x : grad) x = g(rng);
      adam_step(p, grad, st, cfg);
    }
    return std::make_pair(p, st);
  };
  EXPECT_EQ(run(), run());
}

TEST(EarlyStopper, PeakAtSevenStopsByTwelve) {
  EarlyStopper s(5);
  std::size_t last = 0;
  for (std::size_t e = 1; e <= 100; ++e) {
    s.observe(e, e <= 7 ? 0.1 * static_cast<double>(e) : 0.7);
    last = e;
    if (s.should_stop()) break;
  }
  EXPECT_EQ(last, 12u);
  EXPECT_EQ(s.best_epoch(), 7u);
  EXPECT_DOUBLE_EQ(s.best_metric(), 0.7);
}

struct TrainFixture : ::testing::Test {
  IndexedSplit split = toy_split(6, 20, 4, 1);
  UserFeatures features = random_features(6, 8, 2);
  Matrix items = random_items(20, 8, 3);
  ModelShape shape{8, 6, ScoringVariant::kFull};
};

TEST_F(TrainFixture, EarlyStopReturnsPeakWeights) {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.patience = 5;
  auto metric = [](const ScorerParams&, std::size_t e) { return e <= 7 ? 0.1 * static_cast<double>(e) : 0.7; };
  const auto res = train_scorer(split, features, items, shape, cfg, metric);
  EXPECT_EQ(res.log.size(), 12u);
  EXPECT_EQ(res.best_epoch, 7u);
  cfg.max_epochs = 7;
  const auto seven = train_scorer(split, features, items, shape, cfg, metric);
  EXPECT_EQ(res.params, seven.params);
  EXPECT_EQ(res.adam, seven.adam);
}

TEST_F(TrainFixture, IdenticalSeedsIdenticalLogs) {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 6;
  const auto a = train_scorer(split, features, items, shape, cfg);
  const auto b = train_scorer(split, features, items, shape, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    EXPECT_EQ(a.log[k].train_loss, b.log[k].train_loss);
    EXPECT_EQ(a.log[k].val_recall10, b.log[k].val_recall10);
  }
  EXPECT_EQ(a.params, b.params);
  cfg.rng_seed = 43;
  EXPECT_NE(train_scorer(split, features, items, shape, cfg).params, a.params);
}

TEST_F(TrainFixture, ZeroEpochsReturnsInitialization) {
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto res = train_scorer(split, features, items, shape, cfg);
  EXPECT_TRUE(res.log.empty());
  EXPECT_DOUBLE_EQ(res.params.b2(), prior_logit(4));
}

TEST_F(TrainFixture, EmptyTrainingSetRejected) {
  for (auto& t : split.train) t.clear();
  EXPECT_THROW(train_scorer(split, features, items, shape, TrainConfig{}), DataError);
}

TEST_F(TrainFixture, MissingFeaturesNameTheVariant) {
  features.general = Matrix();
  shape.variant = ScoringVariant::kGeneralOnly;
  try {
    train_scorer(split, features, items, shape, TrainConfig{});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("general_only"), std::string::npos) << e.what();
  }
}

TEST(TrainScorer, LossDescendsOnTwentyInteractions) {
  const auto split = toy_split(5, 30, 4, 11);
  const auto f = random_features(5, 8, 12);
  const auto items = random_items(30, 8, 13);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.batch_size = 8;
  const ModelShape shape{8, 8, ScoringVariant::kFull};
  const auto res = train_scorer(split, f, items, shape, cfg);
  cfg.max_epochs = 0;
  const auto init = train_scorer(split, f, items, shape, cfg);
  // Same labelled examples for both; no dropout at evaluation.
  const auto examples = build_epoch_examples(split, 4, 99, 1);
  const double before = oracle::mean_loss(init.params, f, items, examples, {}, 0.0);
  const double after = oracle::mean_loss(res.params, f, items, examples, {}, 0.0);
  EXPECT_LT(after, before);
}

TEST(TrainScorer, OverfitsFiftyInteractions) {
  const auto split = toy_split(10, 20, 5, 21);
  const auto f = random_features(10, 16, 22);
  const auto items = random_items(20, 16, 23);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.batch_size = 50;
  cfg.learning_rate = 1e-2;
  cfg.dropout_rate = 0.0;
  // Always "improving" so that early stopping never triggers.
  auto metric = [](const ScorerParams&, std::size_t e) { return static_cast<double>(e); };
  const auto res = train_scorer(split, f, items, {16, 64, ScoringVariant::kShortOnly}, cfg, metric);
  EXPECT_LT(res.log.back().train_loss, 0.05);
}

TEST(ScoreVariant, ShortOnlyEqualsLongOnlyOnEqualInputs) {
  const auto p = random_params({4, 3, ScoringVariant::kShortOnly}, 4);
  std::mt19937_64 rng(4);
  const auto r = gaussian(rng, 4), ei = gaussian(rng, 4);
  EXPECT_EQ(score_variant(ScoringVariant::kShortOnly, r, {}, {}, ei, p),
            score_variant(ScoringVariant::kLongOnly, {}, r, {}, ei, p));
}

TEST(ScoreVariant, DotProductOrthogonalIsOneHalf) {
  const auto p = random_params({2, 3, ScoringVariant::kDotProduct}, 5);
  const std::vector<double> r = {1.0, 0.0}, ei = {0.0, 3.0};
  EXPECT_EQ(score_variant(ScoringVariant::kDotProduct, r, r, {}, ei, p), 0.5);
}

TEST(ScoreVariant, FullWithLogitGapFiftyApproachesShortOnly) {
  auto p = random_params({3, 4, ScoringVariant::kFull}, 6);
  const std::vector<double> rs = {1.0, 0.5, -0.2}, rl = {-0.4, 0.1, 0.9}, ei = {0.3, -0.7, 0.2};
  // w_a along e_1 scaled so that w_a . (rs - rl) = 50.
  auto wa = p.w_a();
  wa[0] = 50.0 / (rs[0] - rl[0]);
  wa[1] = wa[2] = 0.0;
  EXPECT_NEAR(score_variant(ScoringVariant::kFull, rs, rl, {}, ei, p),
              score_variant(ScoringVariant::kShortOnly, rs, {}, {}, ei, p), 1e-15);
  wa[0] = -wa[0];
  EXPECT_NEAR(score_variant(ScoringVariant::kFull, rs, rl, {}, ei, p),
              score_variant(ScoringVariant::kLongOnly, {}, rl, {}, ei, p), 1e-15);
}

TEST(ScoreVariant, MissingInputNamesVariant) {
  const auto p = random_params({2, 2, ScoringVariant::kFull}, 7);
  try {
    score_variant(ScoringVariant::kGeneralOnly, std::vector<double>(2), std::vector<double>(2), {},
                  std::vector<double>(2), p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("general_only"), std::string::npos);
  }
}

TEST(ScoreVariant, MatchesOracleForEveryVariant) {
  for (auto v : {ScoringVariant::kFull, ScoringVariant::kShortOnly, ScoringVariant::kLongOnly,
                 ScoringVariant::kGeneralOnly, ScoringVariant::kDotProduct}) {
    const auto p = random_params({5, 4, v}, 8);
    const auto f = random_features(1, 5, 9);
    const auto items = random_items(1, 5, 10);
    const double y = score_variant(v, f.short_term.row(0), f.long_term.row(0), f.general.row(0),
                                   items.row(0), p);
    EXPECT_NEAR(y, oracle::forward(p, f, items, 0, 0, {}), 1e-12) << to_string(v);
    EXPECT_GT(y, 0.0);
    EXPECT_LT(y, 1.0);
  }
}

TEST(ScoreUsers, AgreesWithPairwiseScores) {
  const auto p = random_params({4, 5, ScoringVariant::kFull}, 11);
  const auto f = random_features(3, 4, 12);
  const auto items = random_items(7, 4, 13);
  std::vector<double> out;
  const std::vector<std::uint32_t> users = {2, 0};
  score_users(p, f, items, users, out);
  ASSERT_EQ(out.size(), 14u);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_NEAR(out[k * 7 + i], oracle::forward(p, f, items, users[k], i, {}), 1e-12);
    }
  }
  const auto [as, al] = attention_weights(p, f, 2);
  EXPECT_DOUBLE_EQ(as + al, 1.0);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 64;
  c.patience = 9;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.batch_size, 64u);
  EXPECT_EQ(back.patience, 9u);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(ScoringVariant, NamesRoundTrip) {
  for (auto v : {ScoringVariant::kFull, ScoringVariant::kShortOnly, ScoringVariant::kLongOnly,
                 ScoringVariant::kGeneralOnly, ScoringVariant::kDotProduct}) {
    EXPECT_EQ(scoring_variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(scoring_variant_from_string("mystery"), ConfigError);
}

}  // namespace
}  // namespace temporec
