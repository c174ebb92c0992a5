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

#include "temporec/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "temporec/error.hpp"
#include "temporec/eval.hpp"
#include "temporec/fusion.hpp"
#include "temporec/kernels.hpp"
#include "temporec/rng.hpp"

namespace temporec {

std::string_view to_string(ScoringVariant v) {
  switch (v) {
    case ScoringVariant::kFull:
      return "full";
    case ScoringVariant::kShortOnly:
      return "short_only";
    case ScoringVariant::kLongOnly:
      return "long_only";
    case ScoringVariant::kGeneralOnly:
      return "general_only";
    case ScoringVariant::kDotProduct:
      return "dot_product";
  }
  return "full";
}

ScoringVariant scoring_variant_from_string(std::string_view name) {
  for (auto v : {ScoringVariant::kFull, ScoringVariant::kShortOnly, ScoringVariant::kLongOnly,
                 ScoringVariant::kGeneralOnly, ScoringVariant::kDotProduct}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown scoring variant '" + std::string(name) + "'");
}

ScorerParams::ScorerParams(const ModelShape& shape)
    : shape_(shape), data_(shape.d + 2 * shape.d * shape.h + 2 * shape.h + 1, 0.0) {}

ScorerParams ScorerParams::init(const ModelShape& shape, std::uint64_t seed) {
  ScorerParams p(shape);
  Rng rng(seed);
  const double bound_a = 1.0 / std::sqrt(static_cast<double>(shape.d));
  for (double& w : p.w_a()) w = rng.uniform(-bound_a, bound_a);
  const double bound_1 = 1.0 / std::sqrt(static_cast<double>(2 * shape.d));
  for (double& w : p.w1()) w = rng.uniform(-bound_1, bound_1);
  if (shape.h > 0) {
    const double bound_2 = 1.0 / std::sqrt(static_cast<double>(shape.h));
    for (double& w : p.w2()) w = rng.uniform(-bound_2, bound_2);
  }
  return p;
}

MlpActivations mlp_forward(std::span<const double> e_u, std::span<const double> e_i,
                           const ScorerParams& params, std::span<const double> dropout_mask) {
  const std::size_t d = params.d();
  const std::size_t h = params.h();
  if (e_u.size() != d || e_i.size() != d) {
    throw ConfigError("mlp_forward: expected embeddings of dim " + std::to_string(d) + ", got " +
                      std::to_string(e_u.size()) + " and " + std::to_string(e_i.size()));
  }
  if (!dropout_mask.empty() && dropout_mask.size() != h) {
    throw ConfigError("mlp_forward: dropout mask must have one entry per hidden unit");
  }
  MlpActivations a;
  a.pre.resize(h);
  a.hidden.resize(h);
  const auto b1 = params.b1();
  const auto w2 = params.w2();
  a.logit = params.b2();
  for (std::size_t j = 0; j < h; ++j) {
    const auto row = params.w1_row(j);
    a.pre[j] = b1[j] + dot(row.first(d), e_u) + dot(row.last(d), e_i);
    double act = a.pre[j] > 0.0 ? a.pre[j] : 0.0;
    if (!dropout_mask.empty()) act *= dropout_mask[j];
    a.hidden[j] = act;
    a.logit += w2[j] * act;
  }
  a.y_hat = stable_sigmoid(a.logit);
  return a;
}

double bce_loss(double y_hat, int y) {
  const double p = std::clamp(y_hat, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? -std::log(p) : -std::log1p(-p);
}

void check_features(ScoringVariant variant, const UserFeatures& f, std::size_t n_users,
                    std::size_t d) {
  auto require = [&](const Matrix& m, const char* what) {
    if (m.rows() != n_users || m.cols() != d) {
      throw ConfigError("variant " + std::string(to_string(variant)) + " needs " + what +
                        " embeddings (" + std::to_string(n_users) + " x " + std::to_string(d) +
                        "), got " + std::to_string(m.rows()) + " x " + std::to_string(m.cols()));
    }
  };
  switch (variant) {
    case ScoringVariant::kFull:
    case ScoringVariant::kDotProduct:
      require(f.short_term, "short-term");
      require(f.long_term, "long-term");
      break;
    case ScoringVariant::kShortOnly:
      require(f.short_term, "short-term");
      break;
    case ScoringVariant::kLongOnly:
      require(f.long_term, "long-term");
      break;
    case ScoringVariant::kGeneralOnly:
      require(f.general, "general");
      break;
  }
}

double user_embedding(const ScorerParams& params, const UserFeatures& f, std::size_t u,
                      std::span<double> e_u) {
  switch (params.shape().variant) {
    case ScoringVariant::kFull:
    case ScoringVariant::kDotProduct:
      return fuse_into(f.short_term.row(u), f.long_term.row(u), params.w_a(), e_u);
    case ScoringVariant::kShortOnly:
      std::copy_n(f.short_term.row(u).begin(), e_u.size(), e_u.begin());
      break;
    case ScoringVariant::kLongOnly:
      std::copy_n(f.long_term.row(u).begin(), e_u.size(), e_u.begin());
      break;
    case ScoringVariant::kGeneralOnly:
      std::copy_n(f.general.row(u).begin(), e_u.size(), e_u.begin());
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double score_variant(ScoringVariant variant, std::span<const double> r_short,
                     std::span<const double> r_long, std::span<const double> r_general,
                     std::span<const double> e_i, const ScorerParams& params) {
  auto need = [&](std::span<const double> v, const char* what) {
    if (v.size() != params.d()) {
      throw ConfigError("variant " + std::string(to_string(variant)) + " requires the " + what +
                        " embedding");
    }
  };
  switch (variant) {
    case ScoringVariant::kFull: {
      need(r_short, "short-term");
      need(r_long, "long-term");
      auto fused = attention_forward(r_short, r_long, params.w_a());
      return mlp_forward(fused.e_u, e_i, params).y_hat;
    }
    case ScoringVariant::kDotProduct: {
      need(r_short, "short-term");
      need(r_long, "long-term");
      auto fused = attention_forward(r_short, r_long, params.w_a());
      return stable_sigmoid(dot(fused.e_u, e_i));
    }
    case ScoringVariant::kShortOnly:
      need(r_short, "short-term");
      return mlp_forward(r_short, e_i, params).y_hat;
    case ScoringVariant::kLongOnly:
      need(r_long, "long-term");
      return mlp_forward(r_long, e_i, params).y_hat;
    case ScoringVariant::kGeneralOnly:
      need(r_general, "general");
      return mlp_forward(r_general, e_i, params).y_hat;
  }
  return 0.5;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size == 0 || !(epsilon > 0) || patience == 0 ||
      n_neg_per_pos == 0) {
    throw ConfigError("train config: learning_rate, batch_size, epsilon, patience and "
                      "n_neg_per_pos must be positive");
  }
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw ConfigError("train config: Adam betas must lie in (0, 1)");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("train config: dropout_rate must lie in [0, 1)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"beta1", c.beta1},                 {"beta2", c.beta2},
          {"epsilon", c.epsilon},             {"dropout_rate", c.dropout_rate},
          {"patience", c.patience},           {"max_epochs", c.max_epochs},
          {"n_neg_per_pos", c.n_neg_per_pos}, {"rng_seed", c.rng_seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.n_neg_per_pos = j.value("n_neg_per_pos", c.n_neg_per_pos);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  return c;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg) {
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

bool EarlyStopper::observe(std::size_t epoch, double metric) {
  if (!any_ || metric > best_) {
    any_ = true;
    best_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_recall@10", e.val_recall10},
          {"seconds", e.seconds}};
}

void score_users(const ScorerParams& params, const UserFeatures& features,
                 const Matrix& item_embeddings, std::span<const std::uint32_t> users,
                 std::vector<double>& out) {
  kernels::score_catalog(params, features, item_embeddings, users, out);
}

std::pair<double, double> attention_weights(const ScorerParams& params,
                                            const UserFeatures& features, std::size_t u) {
  auto out = attention_forward(features.short_term.row(u), features.long_term.row(u),
                               params.w_a());
  return {out.alpha_short, out.alpha_long};
}

TrainResult train_scorer(const IndexedSplit& split, const UserFeatures& features,
                         const Matrix& items, const ModelShape& shape, const TrainConfig& cfg,
                         const Validator& validator) {
  cfg.validate();
  check_features(shape.variant, features, split.n_users(), shape.d);
  if (items.rows() != split.n_items || items.cols() != shape.d) {
    throw ConfigError("item embeddings must be " + std::to_string(split.n_items) + " x " +
                      std::to_string(shape.d));
  }
  std::size_t n_pos = 0;
  for (const auto& t : split.train) n_pos += t.size();
  if (n_pos == 0) throw DataError("empty training set");

  TrainResult res;
  res.params = ScorerParams::init(shape, derive_seed(cfg.rng_seed, 0x696e6974ULL));
  // Start the output at the label prior; from 0.5 the first Adam steps
  // switch off every hidden unit with a positive output weight.
  if (shape.variant != ScoringVariant::kDotProduct) res.params.b2() = prior_logit(cfg.n_neg_per_pos);
  res.adam = AdamState(res.params.flat().size());
  if (cfg.max_epochs == 0) return res;

  ScorerParams params = res.params;
  AdamState adam = res.adam;
  EarlyStopper stopper(cfg.patience);
  const Validator validate =
      validator ? validator : [&](const ScorerParams& p, std::size_t) {
        return validation_recall_at_10(split, [&](std::span<const std::uint32_t> users,
                                                  std::vector<double>& out) {
          kernels::score_catalog(p, features, items, users, out);
        });
      };
  const bool dropout = cfg.dropout_rate > 0.0 && shape.variant != ScoringVariant::kDotProduct &&
                       shape.h > 0;
  std::vector<std::uint8_t> keep;
  ScorerParams grad(shape);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto examples = build_epoch_examples(split, cfg.n_neg_per_pos, cfg.rng_seed, epoch);
    Rng drop_rng(derive_seed(derive_seed(cfg.rng_seed, 0x64726f70ULL), epoch));
    double loss_total = 0.0;
    for (std::size_t lo = 0; lo < examples.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, examples.size() - lo);
      kernels::Batch batch;
      batch.examples = std::span(examples).subspan(lo, n);
      if (dropout) {
        keep.resize(n * shape.h);
        for (auto& k : keep) k = drop_rng.uniform() >= cfg.dropout_rate ? 1 : 0;
        batch.keep = keep;
        batch.dropout_rate = cfg.dropout_rate;
      }
      loss_total += kernels::batch_gradient(params, features, items, batch, grad) *
                    static_cast<double>(n);
      adam_step(params.flat(), grad.flat(), adam, cfg);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_total / static_cast<double>(examples.size());
    log.val_recall10 = validate(params, epoch);
    log.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(log);
    if (stopper.observe(epoch, log.val_recall10)) {
      res.params = params;
      res.adam = adam;
    }
    if (stopper.should_stop()) break;
  }
  res.best_epoch = stopper.best_epoch();
  res.best_val_recall10 = stopper.best_metric();
  return res;
}

}  // namespace temporec
