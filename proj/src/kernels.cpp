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

#include "temporec/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "temporec/fusion.hpp"

namespace temporec::kernels {
namespace {

struct Scratch {
  std::vector<double> e_u, pre, hid, de_u;

  explicit Scratch(std::size_t d, std::size_t h) : e_u(d), pre(h), hid(h), de_u(d) {}
};

// Adds the gradient of scale * BCE for one example into `grad` and returns
// the (unscaled) loss.
double accumulate_example(const ScorerParams& p, const UserFeatures& f, const Matrix& items,
                          const Example& ex, const std::uint8_t* keep, double keep_scale,
                          double scale, ScorerParams& grad, Scratch& s) {
  const std::size_t d = p.d();
  const std::size_t h = p.h();
  const ScoringVariant variant = p.shape().variant;
  const bool fused = uses_fusion(variant);
  const double alpha = user_embedding(p, f, ex.user, s.e_u);
  const auto e_i = items.row(ex.item);
  const double label = ex.label;

  if (variant == ScoringVariant::kDotProduct) {
    const double y_hat = stable_sigmoid(dot(s.e_u, e_i));
    const double dz = (y_hat - label) * scale;
    for (std::size_t k = 0; k < d; ++k) s.de_u[k] = dz * e_i[k];
    accumulate_attention_grad(f.short_term.row(ex.user), f.long_term.row(ex.user), alpha, s.de_u,
                              grad.w_a());
    return bce_loss(y_hat, ex.label);
  }

  const auto b1 = p.b1();
  const auto w2 = p.w2();
  double z = p.b2();
  for (std::size_t j = 0; j < h; ++j) {
    const auto row = p.w1_row(j);
    const double pre = b1[j] + dot(row.first(d), s.e_u) + dot(row.last(d), e_i);
    s.pre[j] = pre;
    double act = pre > 0.0 ? pre : 0.0;
    if (keep) act *= keep[j] ? keep_scale : 0.0;
    s.hid[j] = act;
    z += w2[j] * act;
  }
  const double y_hat = stable_sigmoid(z);
  const double dz = (y_hat - label) * scale;

  grad.b2() += dz;
  auto g_w2 = grad.w2();
  auto g_b1 = grad.b1();
  if (fused) std::fill(s.de_u.begin(), s.de_u.end(), 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    g_w2[j] += dz * s.hid[j];
    if (s.pre[j] <= 0.0) continue;
    double dh = dz * w2[j];
    if (keep) dh *= keep[j] ? keep_scale : 0.0;
    if (dh == 0.0) continue;
    g_b1[j] += dh;
    auto g_row = grad.w1_row(j);
    axpy(dh, s.e_u, g_row.first(d));
    axpy(dh, e_i, g_row.last(d));
    if (fused) axpy(dh, p.w1_row(j).first(d), s.de_u);
  }
  if (fused) {
    accumulate_attention_grad(f.short_term.row(ex.user), f.long_term.row(ex.user), alpha, s.de_u,
                              grad.w_a());
  }
  return bce_loss(y_hat, ex.label);
}

double keep_scale_of(const Batch& batch) {
  return batch.keep.empty() ? 1.0 : 1.0 / (1.0 - batch.dropout_rate);
}

}  // namespace

double batch_gradient_serial(const ScorerParams& params, const UserFeatures& features,
                             const Matrix& items, const Batch& batch, ScorerParams& grad) {
  grad = ScorerParams(params.shape());
  const std::size_t n = batch.examples.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  const double keep_scale = keep_scale_of(batch);
  Scratch s(params.d(), params.h());
  double loss = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    const std::uint8_t* keep = batch.keep.empty() ? nullptr : batch.keep.data() + e * params.h();
    loss += accumulate_example(params, features, items, batch.examples[e], keep, keep_scale, scale,
                               grad, s);
  }
  return loss / static_cast<double>(n);
}

double batch_gradient(const ScorerParams& params, const UserFeatures& features,
                      const Matrix& items, const Batch& batch, ScorerParams& grad) {
  grad = ScorerParams(params.shape());
  const std::size_t n = batch.examples.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  const double keep_scale = keep_scale_of(batch);
  const std::size_t n_chunks = (n + kGradChunk - 1) / kGradChunk;
  std::vector<ScorerParams> partial(n_chunks);
  std::vector<double> losses(n_chunks, 0.0);

#pragma omp parallel
  {
    Scratch s(params.d(), params.h());
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
      ScorerParams local(params.shape());
      const std::size_t lo = static_cast<std::size_t>(c) * kGradChunk;
      const std::size_t hi = std::min(n, lo + kGradChunk);
      double loss = 0.0;
      for (std::size_t e = lo; e < hi; ++e) {
        const std::uint8_t* keep =
            batch.keep.empty() ? nullptr : batch.keep.data() + e * params.h();
        loss += accumulate_example(params, features, items, batch.examples[e], keep, keep_scale,
                                   scale, local, s);
      }
      partial[c] = std::move(local);
      losses[c] = loss;
    }
  }

  auto out = grad.flat();
  double loss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const auto part = partial[c].flat();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += part[k];
    loss += losses[c];
  }
  return loss / static_cast<double>(n);
}

void score_catalog_serial(const ScorerParams& params, const UserFeatures& features,
                          const Matrix& items, std::span<const std::uint32_t> users,
                          std::vector<double>& out) {
  const std::size_t n_items = items.rows();
  out.assign(users.size() * n_items, 0.0);
  const auto v = params.shape().variant;
  for (std::size_t k = 0; k < users.size(); ++k) {
    const std::size_t u = users[k];
    auto row = [&](const Matrix& m) {
      return m.empty() ? std::span<const double>{} : m.row(u);
    };
    for (std::size_t i = 0; i < n_items; ++i) {
      out[k * n_items + i] = score_variant(v, row(features.short_term), row(features.long_term),
                                           row(features.general), items.row(i), params);
    }
  }
}

void score_catalog(const ScorerParams& params, const UserFeatures& features, const Matrix& items,
                   std::span<const std::uint32_t> users, std::vector<double>& out) {
  const std::size_t n_items = items.rows();
  const std::size_t d = params.d();
  const std::size_t h = params.h();
  out.assign(users.size() * n_items, 0.0);

  if (params.shape().variant == ScoringVariant::kDotProduct) {
#pragma omp parallel
    {
      std::vector<double> e_u(d);
#pragma omp for schedule(dynamic, 4)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(users.size()); ++k) {
        user_embedding(params, features, users[k], e_u);
        for (std::size_t i = 0; i < n_items; ++i) {
          out[k * n_items + i] = stable_sigmoid(dot(e_u, items.row(i)));
        }
      }
    }
    return;
  }

  // Item half of layer 1 plus bias, shared by every user.
  Matrix proj(n_items, h);
  const auto b1 = params.b1();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_items); ++i) {
    const auto e_i = items.row(i);
    auto pr = proj.row(i);
    for (std::size_t j = 0; j < h; ++j) pr[j] = b1[j] + dot(params.w1_row(j).last(d), e_i);
  }

  const auto w2 = params.w2();
  const double b2 = params.b2();
#pragma omp parallel
  {
    std::vector<double> e_u(d), up(h);
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(users.size()); ++k) {
      user_embedding(params, features, users[k], e_u);
      for (std::size_t j = 0; j < h; ++j) up[j] = dot(params.w1_row(j).first(d), e_u);
      for (std::size_t i = 0; i < n_items; ++i) {
        const auto pr = proj.row(i);
        double z = b2;
        for (std::size_t j = 0; j < h; ++j) {
          const double pre = up[j] + pr[j];
          if (pre > 0.0) z += w2[j] * pre;
        }
        out[k * n_items + i] = stable_sigmoid(z);
      }
    }
  }
}

}  // namespace temporec::kernels
