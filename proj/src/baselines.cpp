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

#include "temporec/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "temporec/error.hpp"
#include "temporec/eval.hpp"
#include "temporec/fusion.hpp"
#include "temporec/rng.hpp"

namespace temporec {
namespace {

std::vector<double> mean_rows(std::span<const std::uint32_t> rows, const Matrix& m) {
  if (rows.empty()) throw DataError("user has no train items with embeddings");
  std::vector<double> out(m.cols(), 0.0);
  for (auto r : rows) axpy(1.0, m.row(r), out);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out) v *= inv;
  return out;
}

}  // namespace

std::vector<double> centric_user_embedding(std::span<const std::uint32_t> train_items,
                                           const Matrix& item_embeddings) {
  return mean_rows(train_items, item_embeddings);
}

std::pair<std::vector<double>, std::vector<double>> tempfusion_user_embeddings(
    std::span<const std::uint32_t> train_items, const Matrix& item_embeddings,
    std::size_t recent_k) {
  if (recent_k == 0) throw ConfigError("recent_k must be at least 1");
  const std::size_t n = train_items.size();
  auto recent = train_items.subspan(n - std::min(n, recent_k));
  return {mean_rows(recent, item_embeddings), mean_rows(train_items, item_embeddings)};
}

Matrix centric_features(const IndexedSplit& split, const Matrix& items) {
  Matrix out(split.n_users(), items.cols());
  for (std::size_t u = 0; u < split.n_users(); ++u) {
    auto v = centric_user_embedding(split.train[u], items);
    std::copy(v.begin(), v.end(), out.row(u).begin());
  }
  return out;
}

std::pair<Matrix, Matrix> tempfusion_features(const IndexedSplit& split, const Matrix& items,
                                              std::size_t recent_k) {
  Matrix s(split.n_users(), items.cols());
  Matrix l(split.n_users(), items.cols());
  for (std::size_t u = 0; u < split.n_users(); ++u) {
    auto [rs, rl] = tempfusion_user_embeddings(split.train[u], items, recent_k);
    std::copy(rs.begin(), rs.end(), s.row(u).begin());
    std::copy(rl.begin(), rl.end(), l.row(u).begin());
  }
  return {std::move(s), std::move(l)};
}

std::vector<double> popularity_scores(const IndexedSplit& split) {
  std::vector<double> counts(split.n_items, 0.0);
  for (const auto& t : split.train) {
    for (auto i : t) counts[i] += 1.0;
  }
  return counts;
}

std::vector<std::uint32_t> popularity_rank(const IndexedSplit& split) {
  std::size_t total = 0;
  for (const auto& t : split.train) total += t.size();
  if (total == 0) throw DataError("popularity: empty train set");
  const auto counts = popularity_scores(split);
  std::vector<std::uint32_t> order(split.n_items);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });
  return order;
}

std::vector<std::string> popularity_rank(const SplitDataset& split) {
  std::vector<std::string> out;
  for (auto i : popularity_rank(index_split(split))) out.push_back(split.item_catalog[i]);
  return out;
}

MfParams::MfParams(std::size_t n_users, std::size_t n_items, std::size_t k)
    : n_users_(n_users), n_items_(n_items), k_(k),
      data_((n_users + n_items) * (k + 1), 0.0) {
  if (k == 0) throw ConfigError("MF latent dimension must be at least 1");
}

MfParams MfParams::init(std::size_t n_users, std::size_t n_items, std::size_t k,
                        std::uint64_t seed) {
  MfParams p(n_users, n_items, k);
  Rng rng(seed);
  const std::size_t n_factors = (n_users + n_items) * k;
  for (std::size_t j = 0; j < n_factors; ++j) p.data_[j] = rng.normal(0.0, 0.01);
  return p;
}

double mf_score(const MfParams& p, std::size_t user, std::size_t item) {
  if (user >= p.n_users()) throw DataError("mf_score: unknown user index " + std::to_string(user));
  if (item >= p.n_items()) throw DataError("mf_score: unknown item index " + std::to_string(item));
  return stable_sigmoid(dot(p.user(user), p.item(item)) + p.user_bias(user) + p.item_bias(item));
}

void mf_score_users(const MfParams& p, std::span<const std::uint32_t> users,
                    std::vector<double>& out) {
  const std::size_t n_items = p.n_items();
  out.assign(users.size() * n_items, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(users.size()); ++k) {
    for (std::size_t i = 0; i < n_items; ++i) out[k * n_items + i] = mf_score(p, users[k], i);
  }
}

MfTrainResult mf_train(const IndexedSplit& split, std::size_t k, const TrainConfig& cfg,
                       const MfValidator& validator) {
  cfg.validate();
  std::size_t n_pos = 0;
  for (const auto& t : split.train) n_pos += t.size();
  if (n_pos == 0) throw DataError("empty training set");

  MfTrainResult res;
  res.params = MfParams::init(split.n_users(), split.n_items, k,
                              derive_seed(cfg.rng_seed, 0x6d66696eULL));
  for (std::size_t i = 0; i < split.n_items; ++i) {
    res.params.item_bias(i) = prior_logit(cfg.n_neg_per_pos);
  }
  res.adam = AdamState(res.params.flat().size());
  if (cfg.max_epochs == 0) return res;

  MfParams params = res.params;
  AdamState adam = res.adam;
  MfParams grad(split.n_users(), split.n_items, k);
  EarlyStopper stopper(cfg.patience);
  const MfValidator validate = validator ? validator : [&](const MfParams& p, std::size_t) {
    return validation_recall_at_10(
        split, [&](std::span<const std::uint32_t> users, std::vector<double>& out) {
          mf_score_users(p, users, out);
        });
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto examples = build_epoch_examples(split, cfg.n_neg_per_pos, cfg.rng_seed, epoch);
    double loss_total = 0.0;
    for (std::size_t lo = 0; lo < examples.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, examples.size() - lo);
      const double scale = 1.0 / static_cast<double>(n);
      std::fill(grad.flat().begin(), grad.flat().end(), 0.0);
      for (std::size_t e = lo; e < lo + n; ++e) {
        const Example& ex = examples[e];
        const double y_hat = mf_score(params, ex.user, ex.item);
        loss_total += bce_loss(y_hat, ex.label);
        const double dz = (y_hat - ex.label) * scale;
        axpy(dz, params.item(ex.item), grad.user(ex.user));
        axpy(dz, params.user(ex.user), grad.item(ex.item));
        grad.user_bias(ex.user) += dz;
        grad.item_bias(ex.item) += dz;
      }
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
