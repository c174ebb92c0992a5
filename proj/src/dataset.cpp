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

#include "temporec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "temporec/error.hpp"
#include "temporec/hash.hpp"
#include "temporec/rng.hpp"

namespace temporec {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string line_prefix(std::size_t line_no) {
  return "line " + std::to_string(line_no) + ": ";
}

std::string id_field(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(line_prefix(line_no) + "missing field '" + key + "'");
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw DataError(line_prefix(line_no) + "field '" + key + "' must be a string");
}

std::int64_t timestamp_field(const json& obj, std::size_t line_no) {
  auto it = obj.find("timestamp");
  if (it == obj.end()) {
    throw DataError(line_prefix(line_no) + "missing field 'timestamp'");
  }
  std::int64_t ts = 0;
  if (it->is_number_integer()) {
    ts = it->get<std::int64_t>();
  } else if (it->is_number_float() && std::trunc(it->get<double>()) == it->get<double>()) {
    ts = static_cast<std::int64_t>(it->get<double>());
  } else {
    throw DataError(line_prefix(line_no) + "field 'timestamp' must be an integer");
  }
  if (ts < 0) throw DataError(line_prefix(line_no) + "negative timestamp");
  return ts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

// Minimal RFC 4180 field splitter: quoted fields with "" escapes.
std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(trim(text.substr(pos, end - pos)), line_no);
    pos = end + 1;
  }
}

void sort_and_dedup(std::vector<Interaction>& rows) {
  std::sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user_id, a.timestamp, a.item_id) <
           std::tie(b.user_id, b.timestamp, b.item_id);
  });
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
}

std::vector<Interaction> parse_jsonl(std::string_view text) {
  std::vector<Interaction> rows;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw DataError(line_prefix(line_no) + "not a JSON object");
    }
    rows.push_back({id_field(obj, "user_id", line_no), id_field(obj, "item_id", line_no),
                    timestamp_field(obj, line_no)});
  });
  return rows;
}

std::vector<Interaction> parse_csv(std::string_view text) {
  std::vector<Interaction> rows;
  int col_user = -1, col_item = -1, col_ts = -1;
  std::size_t n_cols = 0;
  bool header_seen = false;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    auto fields = split_csv(line);
    if (!header_seen) {
      for (std::size_t c = 0; c < fields.size(); ++c) {
        auto name = trim(fields[c]);
        if (name == "user_id") col_user = static_cast<int>(c);
        if (name == "item_id") col_item = static_cast<int>(c);
        if (name == "timestamp") col_ts = static_cast<int>(c);
      }
      if (col_user < 0 || col_item < 0 || col_ts < 0) {
        throw DataError(line_prefix(line_no) +
                        "CSV header must name user_id,item_id,timestamp");
      }
      n_cols = fields.size();
      header_seen = true;
      return;
    }
    if (fields.size() != n_cols) {
      throw DataError(line_prefix(line_no) + "expected " + std::to_string(n_cols) +
                      " fields, got " + std::to_string(fields.size()));
    }
    std::string ts_text(trim(fields[col_ts]));
    std::int64_t ts = 0;
    std::size_t used = 0;
    try {
      ts = std::stoll(ts_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (ts_text.empty() || used != ts_text.size()) {
      throw DataError(line_prefix(line_no) + "field 'timestamp' must be an integer");
    }
    if (ts < 0) throw DataError(line_prefix(line_no) + "negative timestamp");
    auto user = std::string(trim(fields[col_user]));
    auto item = std::string(trim(fields[col_item]));
    if (user.empty()) throw DataError(line_prefix(line_no) + "missing field 'user_id'");
    if (item.empty()) throw DataError(line_prefix(line_no) + "missing field 'item_id'");
    rows.push_back({std::move(user), std::move(item), ts});
  });
  return rows;
}

// Decodes one UTF-8 code point starting at s[i]; malformed bytes decode
// as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int extra = 0;
  char32_t cp = b0;
  if (b0 >= 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  }
  ++i;
  for (int k = 0; k < extra && i < s.size(); ++k, ++i) {
    const auto b = static_cast<unsigned char>(s[i]);
    if ((b & 0xC0) != 0x80) return b0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return cp;
}

// Non-ASCII code points count as letters unless they fall in the common
// punctuation, symbol, emoji or private-use blocks.
bool is_non_ascii_letter(char32_t cp) {
  if (cp < 0x80) return false;
  if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0xE000 && cp <= 0xF8FF) return false;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF20) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;
  return true;
}

std::size_t code_point_count(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

json interactions_to_json(const std::vector<Interaction>& rows) {
  json arr = json::array();
  for (const auto& r : rows) arr.push_back(json::array({r.item_id, r.timestamp}));
  return arr;
}

std::vector<Interaction> interactions_from_json(const json& arr, const std::string& user) {
  std::vector<Interaction> rows;
  rows.reserve(arr.size());
  for (const auto& e : arr) {
    rows.push_back({user, e.at(0).get<std::string>(), e.at(1).get<std::int64_t>()});
  }
  return rows;
}

}  // namespace

std::vector<Interaction> parse_interactions(std::string_view text, InteractionFormat format) {
  auto rows = format == InteractionFormat::kJsonl ? parse_jsonl(text) : parse_csv(text);
  if (rows.empty()) throw DataError("interaction file is empty");
  sort_and_dedup(rows);
  return rows;
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path,
                                           InteractionFormat format) {
  if (!std::filesystem::exists(path)) {
    throw DataError("interaction file not found: " + path.string());
  }
  try {
    return parse_interactions(read_file(path), format);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<ItemMeta> load_item_meta(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("item metadata file not found: " + path.string());
  }
  const std::string text = read_file(path);
  std::vector<ItemMeta> items;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw DataError(path.string() + ": " + line_prefix(line_no) + "not a JSON object");
    }
    ItemMeta m;
    m.item_id = id_field(obj, "item_id", line_no);
    m.title = obj.value("title", "");
    m.description = obj.value("description", "");
    items.push_back(std::move(m));
  });
  return items;
}

void write_interactions_jsonl(const std::filesystem::path& path,
                              std::span<const Interaction> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) {
    out << json{{"user_id", r.user_id}, {"item_id", r.item_id}, {"timestamp", r.timestamp}}
               .dump()
        << '\n';
  }
}

void write_item_meta_jsonl(const std::filesystem::path& path,
                           std::span<const ItemMeta> items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& m : items) {
    out << json{{"item_id", m.item_id}, {"title", m.title}, {"description", m.description}}
               .dump()
        << '\n';
  }
}

double ascii_letter_ratio(std::string_view utf8) {
  std::size_t ascii = 0, other = 0;
  for (std::size_t i = 0; i < utf8.size();) {
    const char32_t cp = next_code_point(utf8, i);
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) {
      ++ascii;
    } else if (is_non_ascii_letter(cp)) {
      ++other;
    }
  }
  if (ascii + other == 0) return 0.0;
  return static_cast<double>(ascii) / static_cast<double>(ascii + other);
}

std::vector<ItemMeta> filter_items(std::span<const ItemMeta> meta, std::size_t min_desc_chars,
                                   double min_ascii_ratio) {
  std::vector<ItemMeta> kept;
  for (const auto& m : meta) {
    if (code_point_count(m.description) <= min_desc_chars) continue;
    if (ascii_letter_ratio(m.description) < min_ascii_ratio) continue;
    kept.push_back(m);
  }
  return kept;
}

std::vector<Interaction> restrict_to_items(std::span<const Interaction> rows,
                                           std::span<const ItemMeta> kept) {
  std::unordered_set<std::string> ids;
  for (const auto& m : kept) ids.insert(m.item_id);
  std::vector<Interaction> out;
  for (const auto& r : rows) {
    if (ids.contains(r.item_id)) out.push_back(r);
  }
  return out;
}

std::pair<std::size_t, std::size_t> split_cuts(std::size_t n, const SplitRatios& ratios) {
  // 1e-9 absorbs products such as 10 * 0.7 = 6.9999999999999991.
  auto cut = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  std::size_t train_end = cut(ratios.train);
  std::size_t val_end = cut(ratios.train + ratios.validation);
  if (n < 3) return {n, n};
  // At least one test and one validation interaction, taken from train.
  val_end = std::clamp<std::size_t>(val_end, 2, n - 1);
  train_end = std::clamp<std::size_t>(train_end, 1, val_end - 1);
  return {train_end, val_end};
}

DatasetStats compute_stats(std::span<const std::size_t> profile_sizes, std::size_t n_items) {
  DatasetStats s;
  s.n_users = profile_sizes.size();
  s.n_items = n_items;
  if (profile_sizes.empty()) return s;
  std::vector<std::size_t> sorted(profile_sizes.begin(), profile_sizes.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.n_interactions = std::accumulate(sorted.begin(), sorted.end(), std::size_t{0});
  s.profile_size_mean = static_cast<double>(s.n_interactions) / static_cast<double>(n);
  s.profile_size_median =
      n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                 : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
  s.profile_size_max = sorted.back();
  // Mode: most frequent size, smallest on ties.
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    if (j - i > best_count) {
      best_count = j - i;
      s.profile_size_mode = sorted[i];
    }
    i = j;
  }
  if (n > 1) {
    double ss = 0.0;
    for (auto v : sorted) {
      const double d = static_cast<double>(v) - s.profile_size_mean;
      ss += d * d;
    }
    s.profile_size_stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

SplitDataset temporal_split(std::span<const Interaction> interactions,
                            const SplitRatios& ratios, std::size_t min_interactions) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  if (min_interactions < 3) throw ConfigError("min_interactions must be at least 3");

  std::vector<Interaction> rows(interactions.begin(), interactions.end());
  std::sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user_id, a.timestamp, a.item_id) <
           std::tie(b.user_id, b.timestamp, b.item_id);
  });

  SplitDataset split;
  std::set<std::string> catalog;
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].user_id == rows[i].user_id) ++j;
    const std::size_t n = j - i;
    if (n >= min_interactions) {
      auto [train_end, val_end] = split_cuts(n, ratios);
      UserSplit us;
      us.user_id = rows[i].user_id;
      auto first = rows.begin() + static_cast<std::ptrdiff_t>(i);
      us.train.assign(first, first + static_cast<std::ptrdiff_t>(train_end));
      us.validation.assign(first + static_cast<std::ptrdiff_t>(train_end),
                           first + static_cast<std::ptrdiff_t>(val_end));
      us.test.assign(first + static_cast<std::ptrdiff_t>(val_end),
                     first + static_cast<std::ptrdiff_t>(n));
      for (std::size_t k = i; k < j; ++k) catalog.insert(rows[k].item_id);
      sizes.push_back(n);
      split.users.push_back(std::move(us));
    }
    i = j;
  }
  if (split.users.empty()) throw DataError("empty split");
  split.item_catalog.assign(catalog.begin(), catalog.end());
  split.stats = compute_stats(sizes, split.item_catalog.size());
  return split;
}

std::optional<std::size_t> SplitDataset::user_index(std::string_view user_id) const {
  auto it = std::lower_bound(users.begin(), users.end(), user_id,
                             [](const UserSplit& u, std::string_view id) { return u.user_id < id; });
  if (it == users.end() || it->user_id != user_id) return std::nullopt;
  return static_cast<std::size_t>(it - users.begin());
}

std::optional<std::size_t> SplitDataset::item_index(std::string_view item_id) const {
  auto it = std::lower_bound(item_catalog.begin(), item_catalog.end(), item_id);
  if (it == item_catalog.end() || *it != item_id) return std::nullopt;
  return static_cast<std::size_t>(it - item_catalog.begin());
}

std::vector<std::uint32_t> sample_from_pool(std::span<const std::uint32_t> pool,
                                            std::size_t n_positives, std::size_t n_neg_per_pos,
                                            std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  const std::size_t m = pool.size();
  const std::size_t k = std::min(n_neg_per_pos, m);
  std::vector<std::uint32_t> out;
  out.reserve(n_positives * k);
  std::vector<std::size_t> chosen;
  for (std::size_t p = 0; p < n_positives; ++p) {
    // Floyd's algorithm: k distinct positions out of m.
    chosen.clear();
    for (std::size_t j = m - k; j < m; ++j) {
      const std::size_t t = rng.index(j + 1);
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) {
        chosen.push_back(t);
      } else {
        chosen.push_back(j);
      }
    }
    for (auto c : chosen) out.push_back(pool[c]);
  }
  return out;
}

std::vector<LabeledExample> sample_negatives(
    const SplitDataset& split, std::string_view user_id, std::size_t n_neg_per_pos,
    std::uint64_t rng_seed, const std::function<void(const std::string&)>& warn) {
  auto u = split.user_index(user_id);
  if (!u) throw DataError("unknown user " + std::string(user_id));
  const UserSplit& us = split.users[*u];
  std::vector<char> seen(split.item_catalog.size(), 0);
  for (const auto* part : {&us.train, &us.validation, &us.test}) {
    for (const auto& r : *part) seen[*split.item_index(r.item_id)] = 1;
  }
  std::vector<std::uint32_t> pool;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) pool.push_back(static_cast<std::uint32_t>(i));
  }
  if (pool.size() < n_neg_per_pos && warn) {
    warn("user " + std::string(user_id) + ": negative pool has " +
         std::to_string(pool.size()) + " items, " + std::to_string(n_neg_per_pos) +
         " requested per positive");
  }
  auto picks = sample_from_pool(pool, us.train.size(), n_neg_per_pos,
                                derive_seed(rng_seed, fnv1a64(user_id)));
  std::vector<LabeledExample> out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back({us.user_id, split.item_catalog[i], 0});
  return out;
}

json stats_to_json(const DatasetStats& s) {
  return {{"n_users", s.n_users},
          {"n_items", s.n_items},
          {"n_interactions", s.n_interactions},
          {"profile_size",
           {{"mean", s.profile_size_mean},
            {"median", s.profile_size_median},
            {"mode", s.profile_size_mode},
            {"stddev", s.profile_size_stddev},
            {"max", s.profile_size_max}}}};
}

json split_to_json(const SplitDataset& split) {
  json users = json::array();
  for (const auto& u : split.users) {
    users.push_back({{"user_id", u.user_id},
                     {"train", interactions_to_json(u.train)},
                     {"validation", interactions_to_json(u.validation)},
                     {"test", interactions_to_json(u.test)}});
  }
  return {{"users", users}, {"item_catalog", split.item_catalog}, {"stats", stats_to_json(split.stats)}};
}

SplitDataset split_from_json(const json& j) {
  SplitDataset split;
  for (const auto& u : j.at("users")) {
    UserSplit us;
    us.user_id = u.at("user_id").get<std::string>();
    us.train = interactions_from_json(u.at("train"), us.user_id);
    us.validation = interactions_from_json(u.at("validation"), us.user_id);
    us.test = interactions_from_json(u.at("test"), us.user_id);
    split.users.push_back(std::move(us));
  }
  split.item_catalog = j.at("item_catalog").get<std::vector<std::string>>();
  std::vector<std::size_t> sizes;
  for (const auto& u : split.users) sizes.push_back(u.size());
  split.stats = compute_stats(sizes, split.item_catalog.size());
  return split;
}

json split_manifest(const SplitDataset& split) {
  json users = json::array();
  for (const auto& u : split.users) {
    users.push_back({{"user_id", u.user_id},
                     {"n", u.size()},
                     {"train_end", u.train.size()},
                     {"val_end", u.train.size() + u.validation.size()}});
  }
  return {{"version", 1},
          {"n_users", split.users.size()},
          {"n_items", split.item_catalog.size()},
          {"users", users},
          {"content_hash", sha256_hex(split_to_json(split).dump())}};
}

}  // namespace temporec

namespace temporec {
namespace {

std::vector<std::uint32_t> sorted_unique(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

IndexedSplit index_split(const SplitDataset& split) {
  IndexedSplit out;
  out.n_items = split.item_catalog.size();
  const std::size_t n = split.users.size();
  out.train.resize(n);
  out.validation.resize(n);
  out.test.resize(n);
  out.train_seen.resize(n);
  out.train_val_seen.resize(n);
  out.negative_pool.resize(n);
  auto to_index = [&](const std::vector<Interaction>& rows) {
    std::vector<std::uint32_t> idx;
    idx.reserve(rows.size());
    for (const auto& r : rows) {
      auto i = split.item_index(r.item_id);
      if (!i) throw DataError("item " + r.item_id + " missing from catalog");
      idx.push_back(static_cast<std::uint32_t>(*i));
    }
    return idx;
  };
  for (std::size_t u = 0; u < n; ++u) {
    const auto& us = split.users[u];
    out.train[u] = to_index(us.train);
    out.validation[u] = to_index(us.validation);
    out.test[u] = to_index(us.test);
    out.train_seen[u] = sorted_unique(out.train[u]);
    auto tv = out.train[u];
    tv.insert(tv.end(), out.validation[u].begin(), out.validation[u].end());
    out.train_val_seen[u] = sorted_unique(std::move(tv));
    auto all = out.train_val_seen[u];
    all.insert(all.end(), out.test[u].begin(), out.test[u].end());
    all = sorted_unique(std::move(all));
    auto& pool = out.negative_pool[u];
    pool.reserve(out.n_items - all.size());
    std::size_t k = 0;
    for (std::uint32_t i = 0; i < out.n_items; ++i) {
      if (k < all.size() && all[k] == i) {
        ++k;
      } else {
        pool.push_back(i);
      }
    }
  }
  return out;
}

std::vector<Example> build_epoch_examples(const IndexedSplit& split, std::size_t n_neg_per_pos,
                                          std::uint64_t seed, std::uint64_t epoch) {
  std::vector<Example> examples;
  const std::uint64_t epoch_seed = derive_seed(seed, 0x6e6567ULL + epoch);
  for (std::size_t u = 0; u < split.n_users(); ++u) {
    const auto user = static_cast<std::uint32_t>(u);
    for (auto i : split.train[u]) examples.push_back({user, i, 1});
    auto negs = sample_from_pool(split.negative_pool[u], split.train[u].size(), n_neg_per_pos,
                                 derive_seed(epoch_seed, u));
    for (auto i : negs) examples.push_back({user, i, 0});
  }
  Rng rng(derive_seed(epoch_seed, 0x73687566ULL));
  rng.shuffle(examples);
  return examples;
}

}  // namespace temporec
