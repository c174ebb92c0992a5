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

#include "temporec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "temporec/error.hpp"

namespace temporec {
namespace {

std::vector<std::uint32_t> unique_sorted(std::span<const std::uint32_t> v) {
  std::vector<std::uint32_t> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

struct Ranked {
  double score;
  std::uint32_t index;
};

bool better(const Ranked& a, const Ranked& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

UserMetrics user_metrics(const std::string& user_id, std::span<const double> scores,
                         std::span<const std::uint32_t> exclude,
                         std::span<const std::uint32_t> test) {
  const auto top = rank_items(scores, exclude, 20);
  const auto truth = unique_sorted(test);
  std::span<const std::uint32_t> top10(top.data(), std::min<std::size_t>(10, top.size()));
  UserMetrics m;
  m.user_id = user_id;
  m.recall10 = recall_at_k(top10, truth);
  m.recall20 = recall_at_k(top, truth);
  m.ndcg10 = ndcg_at_k(top10, truth, 10);
  m.ndcg20 = ndcg_at_k(top, truth, 20);
  return m;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<std::uint32_t> rank_items(std::span<const double> scores,
                                      std::span<const std::uint32_t> exclude, std::size_t k) {
  if (k == 0) throw ConfigError("rank_items: K must be at least 1");
  std::vector<Ranked> cands;
  cands.reserve(scores.size());
  std::size_t e = 0;
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    while (e < exclude.size() && exclude[e] < i) ++e;
    if (e < exclude.size() && exclude[e] == i) continue;
    const double s = std::isnan(scores[i]) ? -std::numeric_limits<double>::infinity() : scores[i];
    cands.push_back({s, i});
  }
  if (cands.empty()) throw DataError("rank_items: empty candidate set");
  const std::size_t n = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(),
                    better);
  std::vector<std::uint32_t> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = cands[r].index;
  return out;
}

std::vector<std::string> rank_items(const std::map<std::string, double>& scores,
                                    const std::vector<std::string>& exclude, std::size_t k) {
  std::vector<std::string> ids;
  std::vector<double> values;
  for (const auto& [id, s] : scores) {
    ids.push_back(id);
    values.push_back(s);
  }
  std::vector<std::uint32_t> ex;
  for (const auto& id : exclude) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it != ids.end() && *it == id) ex.push_back(static_cast<std::uint32_t>(it - ids.begin()));
  }
  std::sort(ex.begin(), ex.end());
  std::vector<std::string> out;
  for (auto i : rank_items(values, ex, k)) out.push_back(ids[i]);
  return out;
}

double recall_at_k(std::span<const std::uint32_t> top_k, std::span<const std::uint32_t> test_items) {
  const auto truth = unique_sorted(test_items);
  if (truth.empty()) throw DataError("recall_at_k: empty test set");
  std::size_t hits = 0;
  for (auto i : unique_sorted(top_k)) {
    if (std::binary_search(truth.begin(), truth.end(), i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::uint32_t> top_k, std::span<const std::uint32_t> test_items,
                 std::size_t k) {
  const auto truth = unique_sorted(test_items);
  if (truth.empty()) throw DataError("ndcg_at_k: empty test set");
  double dcg = 0.0;
  for (std::size_t r = 0; r < top_k.size() && r < k; ++r) {
    if (std::binary_search(truth.begin(), truth.end(), top_k[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, truth.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ConfigError("paired_t_test: need two equal-length samples of size >= 2");
  }
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  TTestResult r;
  r.mean_diff = mean_of(diff);
  double ss = 0.0;
  bool all_zero = true;
  for (double d : diff) {
    ss += (d - r.mean_diff) * (d - r.mean_diff);
    all_zero = all_zero && d == 0.0;
  }
  if (all_zero) {
    r.p_value = 1.0;
    return r;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    r.t = r.mean_diff > 0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  } else {
    r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = std::clamp(student_t_two_sided_p(r.t, static_cast<double>(n - 1)), 0.0, 1.0);
  }
  r.significant = r.p_value < alpha && r.mean_diff > 0.0;
  return r;
}

std::vector<double> EvalReport::metric_values(std::string_view metric) const {
  if (std::find(metric_names().begin(), metric_names().end(), metric) == metric_names().end()) {
    throw ConfigError("unknown metric " + std::string(metric));
  }
  std::vector<double> out;
  out.reserve(users.size());
  for (const auto& u : users) {
    if (metric == "recall@10") {
      out.push_back(u.recall10);
    } else if (metric == "recall@20") {
      out.push_back(u.recall20);
    } else if (metric == "ndcg@10") {
      out.push_back(u.ndcg10);
    } else if (metric == "ndcg@20") {
      out.push_back(u.ndcg20);
    } else {
      throw ConfigError("unknown metric " + std::string(metric));
    }
  }
  return out;
}

void recompute_aggregate(EvalReport& report) {
  report.aggregate.clear();
  for (const auto& m : metric_names()) report.aggregate[m] = mean_of(report.metric_values(m));
}

EvalReport evaluate(std::string method, const SplitDataset& split, const IndexedSplit& index,
                    const UserScorer& scorer, const AttentionProbe& attention) {
  std::vector<std::uint32_t> users;
  for (std::size_t u = 0; u < index.n_users(); ++u) {
    if (!index.test[u].empty()) users.push_back(static_cast<std::uint32_t>(u));
  }
  EvalReport report;
  report.method = std::move(method);
  report.users.resize(users.size());
  std::vector<double> scores(index.n_items);
  for (std::size_t k = 0; k < users.size(); ++k) {
    const std::size_t u = users[k];
    try {
      scorer(u, scores);
    } catch (const Error& e) {
      throw DataError("no scores for user " + split.users[u].user_id + ": " + e.what());
    }
    report.users[k] = user_metrics(split.users[u].user_id, scores, index.train_val_seen[u],
                                   index.test[u]);
    if (attention) std::tie(report.users[k].alpha_short, report.users[k].alpha_long) = attention(u);
  }
  recompute_aggregate(report);
  return report;
}

EvalReport evaluate_blocked(std::string method, const SplitDataset& split,
                            const IndexedSplit& index, const ScoreBlockFn& score_block,
                            const AttentionProbe& attention, std::size_t block) {
  std::vector<std::uint32_t> users;
  for (std::size_t u = 0; u < index.n_users(); ++u) {
    if (!index.test[u].empty()) users.push_back(static_cast<std::uint32_t>(u));
  }
  EvalReport report;
  report.method = std::move(method);
  report.users.resize(users.size());
  std::vector<double> scores;
  const std::size_t n_items = index.n_items;
  for (std::size_t lo = 0; lo < users.size(); lo += block) {
    const std::size_t hi = std::min(users.size(), lo + block);
    std::span<const std::uint32_t> chunk(users.data() + lo, hi - lo);
    score_block(chunk, scores);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(chunk.size()); ++k) {
      const std::size_t u = chunk[k];
      std::span<const double> row(scores.data() + k * n_items, n_items);
      report.users[lo + k] =
          user_metrics(split.users[u].user_id, row, index.train_val_seen[u], index.test[u]);
    }
    if (attention) {
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        std::tie(report.users[lo + k].alpha_short, report.users[lo + k].alpha_long) =
            attention(chunk[k]);
      }
    }
  }
  recompute_aggregate(report);
  return report;
}

double validation_recall_at_10(const IndexedSplit& index, const ScoreBlockFn& score_block,
                               std::size_t block) {
  std::vector<std::uint32_t> users;
  for (std::size_t u = 0; u < index.n_users(); ++u) {
    if (!index.validation[u].empty()) users.push_back(static_cast<std::uint32_t>(u));
  }
  if (users.empty()) return 0.0;
  std::vector<double> recalls(users.size());
  std::vector<double> scores;
  const std::size_t n_items = index.n_items;
  for (std::size_t lo = 0; lo < users.size(); lo += block) {
    const std::size_t hi = std::min(users.size(), lo + block);
    std::span<const std::uint32_t> chunk(users.data() + lo, hi - lo);
    score_block(chunk, scores);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(chunk.size()); ++k) {
      const std::size_t u = chunk[k];
      std::span<const double> row(scores.data() + k * n_items, n_items);
      recalls[lo + k] = recall_at_k(rank_items(row, index.train_seen[u], 10), index.validation[u]);
    }
  }
  return mean_of(recalls);
}

void add_significance(EvalReport& report, const EvalReport& baseline, double alpha) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < baseline.users.size(); ++i) pos[baseline.users[i].user_id] = i;
  for (const auto& metric : metric_names()) {
    const auto mine = report.metric_values(metric);
    const auto theirs = baseline.metric_values(metric);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < report.users.size(); ++i) {
      auto it = pos.find(report.users[i].user_id);
      if (it == pos.end()) continue;
      a.push_back(mine[i]);
      b.push_back(theirs[it->second]);
    }
    SignificanceEntry e{metric, baseline.method, 1.0, false};
    if (a.size() >= 2) {
      auto t = paired_t_test(a, b, alpha);
      e.p_value = t.p_value;
      e.significant = t.significant;
    }
    report.significance.push_back(std::move(e));
  }
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json users = nlohmann::json::array();
  nlohmann::json attention = nlohmann::json::array();
  for (const auto& u : report.users) {
    nlohmann::json j = {{"user_id", u.user_id},
                        {"recall@10", u.recall10},
                        {"recall@20", u.recall20},
                        {"ndcg@10", u.ndcg10},
                        {"ndcg@20", u.ndcg20}};
    if (u.alpha_short && u.alpha_long) {
      j["alpha_short"] = *u.alpha_short;
      j["alpha_long"] = *u.alpha_long;
      attention.push_back(
          {{"user_id", u.user_id}, {"alpha_short", *u.alpha_short}, {"alpha_long", *u.alpha_long}});
    }
    users.push_back(std::move(j));
  }
  nlohmann::json sig = nlohmann::json::array();
  for (const auto& s : report.significance) {
    sig.push_back({{"metric", s.metric},
                   {"baseline_method", s.baseline_method},
                   {"p_value", s.p_value},
                   {"significant", s.significant}});
  }
  nlohmann::json out = {{"method", report.method},
                        {"aggregate", report.aggregate},
                        {"significance", sig},
                        {"users", users}};
  if (!attention.empty()) out["attention"] = attention;
  return out;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  for (const auto& u : j.at("users")) {
    UserMetrics m;
    m.user_id = u.at("user_id").get<std::string>();
    m.recall10 = u.at("recall@10").get<double>();
    m.recall20 = u.at("recall@20").get<double>();
    m.ndcg10 = u.at("ndcg@10").get<double>();
    m.ndcg20 = u.at("ndcg@20").get<double>();
    if (u.contains("alpha_short")) {
      m.alpha_short = u.at("alpha_short").get<double>();
      m.alpha_long = u.at("alpha_long").get<double>();
    }
    r.users.push_back(std::move(m));
  }
  for (const auto& s : j.at("significance")) {
    r.significance.push_back({s.at("metric").get<std::string>(),
                              s.at("baseline_method").get<std::string>(),
                              s.at("p_value").get<double>(), s.at("significant").get<bool>()});
  }
  recompute_aggregate(r);
  return r;
}

}  // namespace temporec
