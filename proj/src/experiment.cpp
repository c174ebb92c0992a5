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

#include "temporec/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "temporec/error.hpp"

namespace temporec {
namespace {

Matrix to_matrix(const std::vector<Embedding>& rows, std::size_t d) {
  Matrix m(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].values.begin(), rows[r].values.end(), m.row(r).begin());
  }
  return m;
}

std::vector<Embedding> encode(TextEncoder& enc, EmbeddingCache* cache,
                              std::span<const std::string> texts) {
  return cache ? encode_cached(enc, *cache, texts) : enc.encode(texts);
}

}  // namespace

ExperimentData prepare_experiment(SplitDataset split, std::span<const ItemMeta> items,
                                  std::span<const TemporalProfile> profiles,
                                  TextEncoder& encoder, EmbeddingCache* cache) {
  ExperimentData data;
  data.index = index_split(split);
  const std::size_t d = encoder.dim();

  const auto meta = index_items(items);
  std::vector<std::string> item_texts;
  item_texts.reserve(split.item_catalog.size());
  for (const auto& id : split.item_catalog) {
    auto it = meta.find(id);
    if (it == meta.end()) throw DataError("no metadata for catalog item " + id);
    item_texts.push_back(item_text(it->second));
  }
  data.items = to_matrix(encode(encoder, cache, item_texts), d);

  std::map<std::string_view, const TemporalProfile*> by_user;
  for (const auto& p : profiles) by_user[p.user_id] = &p;
  std::vector<std::string> texts;
  texts.reserve(3 * split.users.size());
  for (const auto& us : split.users) {
    auto it = by_user.find(us.user_id);
    if (it == by_user.end()) throw DataError("no profile for user " + us.user_id);
    const auto& p = *it->second;
    texts.push_back(p.short_text);
    texts.push_back(p.long_text);
    texts.push_back(p.general_text.value_or(p.short_text + " " + p.long_text));
  }
  const auto emb = encode(encoder, cache, texts);
  const std::size_t n = split.users.size();
  data.profiles.short_term = Matrix(n, d);
  data.profiles.long_term = Matrix(n, d);
  data.profiles.general = Matrix(n, d);
  for (std::size_t u = 0; u < n; ++u) {
    std::copy(emb[3 * u].values.begin(), emb[3 * u].values.end(),
              data.profiles.short_term.row(u).begin());
    std::copy(emb[3 * u + 1].values.begin(), emb[3 * u + 1].values.end(),
              data.profiles.long_term.row(u).begin());
    std::copy(emb[3 * u + 2].values.begin(), emb[3 * u + 2].values.end(),
              data.profiles.general.row(u).begin());
  }
  data.split = std::move(split);
  return data;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kCentric: return "centric";
    case Method::kTempFusion: return "temp_fusion";
    case Method::kPopularity: return "popularity";
    case Method::kMf: return "mf";
    case Method::kLlmTp: return "llm_tp";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  for (auto m : all_methods()) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected centric, temp_fusion, popularity, mf or llm_tp)");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> all = {Method::kCentric, Method::kTempFusion,
                                          Method::kPopularity, Method::kMf, Method::kLlmTp};
  return all;
}

UserFeatures method_features(Method m, const ExperimentData& data, std::size_t recent_k) {
  UserFeatures f;
  switch (m) {
    case Method::kCentric:
      f.general = centric_features(data.index, data.items);
      break;
    case Method::kTempFusion:
      std::tie(f.short_term, f.long_term) = tempfusion_features(data.index, data.items, recent_k);
      break;
    case Method::kLlmTp:
      f = data.profiles;
      break;
    case Method::kPopularity:
    case Method::kMf:
      break;
  }
  return f;
}

ScoringVariant method_variant(Method m) {
  return m == Method::kCentric ? ScoringVariant::kGeneralOnly : ScoringVariant::kFull;
}

TrainedMethod train_method(Method m, const ExperimentData& data, const ExperimentSettings& s) {
  TrainedMethod out;
  out.name = std::string(to_string(m));
  out.method = m;
  out.variant = method_variant(m);
  switch (m) {
    case Method::kPopularity:
      out.popularity = popularity_scores(data.index);
      popularity_rank(data.index);  // rejects an empty train set
      break;
    case Method::kMf:
      out.mf = mf_train(data.index, s.mf_k, s.train);
      break;
    default: {
      out.features = method_features(m, data, s.recent_k);
      const ModelShape shape{data.items.cols(), s.h, out.variant};
      out.scorer = train_scorer(data.index, out.features, data.items, shape, s.train);
    }
  }
  return out;
}

TrainedMethod train_variant(ScoringVariant v, const ExperimentData& data,
                            const ExperimentSettings& s) {
  TrainedMethod out;
  out.name = "variant_" + std::string(to_string(v));
  out.method = Method::kLlmTp;
  out.variant = v;
  out.features = data.profiles;
  const ModelShape shape{data.items.cols(), s.h, v};
  out.scorer = train_scorer(data.index, out.features, data.items, shape, s.train);
  return out;
}

EvalReport evaluate_trained(const TrainedMethod& m, const ExperimentData& data) {
  ScoreBlockFn block;
  AttentionProbe probe;
  if (m.method == Method::kPopularity) {
    block = [&](std::span<const std::uint32_t> users, std::vector<double>& out) {
      out.clear();
      for (std::size_t k = 0; k < users.size(); ++k) {
        out.insert(out.end(), m.popularity.begin(), m.popularity.end());
      }
    };
  } else if (m.mf) {
    block = [&](std::span<const std::uint32_t> users, std::vector<double>& out) {
      mf_score_users(m.mf->params, users, out);
    };
  } else if (m.scorer) {
    block = [&](std::span<const std::uint32_t> users, std::vector<double>& out) {
      score_users(m.scorer->params, m.features, data.items, users, out);
    };
    if (uses_fusion(m.variant)) {
      probe = [&](std::size_t u) { return attention_weights(m.scorer->params, m.features, u); };
    }
  } else {
    throw ConfigError("method " + m.name + " has not been trained");
  }
  return evaluate_blocked(m.name, data.split, data.index, block, probe);
}

EvalReport average_reports(std::span<const EvalReport> runs) {
  if (runs.empty()) throw DataError("no reports to average");
  EvalReport out = runs.front();
  out.significance.clear();
  const double n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < out.users.size(); ++k) {
    auto& u = out.users[k];
    std::array<double, 6> acc{};
    bool have_alpha = true;
    for (const auto& r : runs) {
      if (r.users.size() != out.users.size() || r.users[k].user_id != u.user_id) {
        throw DataError("reports disagree on evaluated users");
      }
      const auto& x = r.users[k];
      acc[0] += x.recall10;
      acc[1] += x.recall20;
      acc[2] += x.ndcg10;
      acc[3] += x.ndcg20;
      have_alpha = have_alpha && x.alpha_short.has_value();
      if (have_alpha) {
        acc[4] += *x.alpha_short;
        acc[5] += *x.alpha_long;
      }
    }
    u.recall10 = acc[0] / n;
    u.recall20 = acc[1] / n;
    u.ndcg10 = acc[2] / n;
    u.ndcg20 = acc[3] / n;
    if (have_alpha) {
      u.alpha_short = acc[4] / n;
      u.alpha_long = acc[5] / n;
    } else {
      u.alpha_short.reset();
      u.alpha_long.reset();
    }
  }
  recompute_aggregate(out);
  return out;
}

}  // namespace temporec
