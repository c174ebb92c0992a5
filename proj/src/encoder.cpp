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

#include "temporec/encoder.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "temporec/error.hpp"
#include "temporec/hash.hpp"
#include "temporec/text.hpp"

namespace temporec {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian layout");

constexpr char kMagic[4] = {'T', 'R', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("embedding cache: truncated file");
  return v;
}

}  // namespace

Embedding encode_hash(std::string_view text, std::size_t d) {
  if (d < 2) throw ConfigError("hash encoder dimension must be at least 2");
  Embedding e{std::vector<double>(d, 0.0)};
  for (const auto& tok : tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok);
    e.values[h % d] += (h >> 63) == 0 ? 1.0 : -1.0;
  }
  double sq = 0.0;
  for (double v : e.values) sq += v * v;
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : e.values) v *= inv;
  }
  return e;
}

HashEncoder::HashEncoder(std::size_t d) : d_(d) {
  if (d < 2) throw ConfigError("hash encoder dimension must be at least 2");
}

std::vector<Embedding> HashEncoder::encode(std::span<const std::string> texts) {
  std::vector<Embedding> out(texts.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(texts.size()); ++i) {
    out[i] = encode_hash(texts[i], d_);
  }
  return out;
}

EmbedConfig EmbedConfig::from_env() {
  EmbedConfig cfg;
  if (const char* base = std::getenv("TEMPOREC_EMBED_BASE")) cfg.base_url = base;
  return cfg;
}

RemoteEncoder::RemoteEncoder(EmbedConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw ConfigError("remote encoder needs TEMPOREC_EMBED_BASE");
  if (cfg_.batch_size == 0 || cfg_.batch_size > 64) cfg_.batch_size = 64;
  if (cfg_.max_in_flight == 0) cfg_.max_in_flight = 1;
  base_ = parse_base_url(cfg_.base_url);
}

nlohmann::json RemoteEncoder::health() { return get_json(base_, "/health", cfg_.retry, "embed"); }

std::vector<Embedding> RemoteEncoder::encode_batch(std::span<const std::string> texts) {
  nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  auto resp = post_json(base_, "/embed", body, {}, cfg_.retry, "embed");
  std::size_t dim = 0;
  try {
    dim = resp.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("embed: response has no dim", true);
  }
  if (dim != cfg_.dim) {
    throw ConfigError("embed: service returned dim " + std::to_string(dim) +
                      " but the configured dimension is " + std::to_string(cfg_.dim));
  }
  if (!resp.contains("vectors") || !resp["vectors"].is_array()) {
    throw BackendError("embed: response has no vectors", true);
  }
  const auto& vectors = resp["vectors"];
  if (vectors.size() != texts.size()) {
    throw BackendError("embed: expected " + std::to_string(texts.size()) + " vectors, got " +
                           std::to_string(vectors.size()),
                       true);
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& v : vectors) {
    Embedding e{v.get<std::vector<double>>()};
    if (e.dim() != dim) {
      throw BackendError("embed: vector of length " + std::to_string(e.dim()) +
                             " in a response declaring dim " + std::to_string(dim),
                         true);
    }
    for (double x : e.values) {
      if (!std::isfinite(x)) throw BackendError("embed: non-finite value in response", true);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Embedding> RemoteEncoder::encode(std::span<const std::string> texts) {
  const std::size_t n_batches = (texts.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  std::vector<std::vector<Embedding>> results(n_batches);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      try {
        const std::size_t lo = b * cfg_.batch_size;
        const std::size_t hi = std::min(texts.size(), lo + cfg_.batch_size);
        results[b] = encode_batch(texts.subspan(lo, hi - lo));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg_.max_in_flight, n_batches));
  std::vector<std::thread> workers;
  for (std::size_t w = 1; w < n_workers; ++w) workers.emplace_back(work);
  work();
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (auto& r : results) {
    for (auto& e : r) out.push_back(std::move(e));
  }
  return out;
}

std::uint64_t text_key(std::string_view text) { return fnv1a64(text); }

EmbeddingCache::EmbeddingCache(EmbeddingCache&& other) noexcept : dim_(other.dim_) {
  std::unique_lock lock(other.mu_);
  entries_ = std::move(other.entries_);
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not an embedding cache (bad magic)");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported cache version " + std::to_string(version));
  }
  const auto dim = read_pod<std::uint32_t>(in);
  const auto count = read_pod<std::uint64_t>(in);
  EmbeddingCache cache(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto key = read_pod<std::uint64_t>(in);
    std::vector<float> v(dim);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated record");
    cache.entries_.emplace(key, std::move(v));
  }
  return cache;
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mu_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embedding cache " + path.string());
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  write_pod<std::uint64_t>(out, entries_.size());
  nlohmann::json offsets = nlohmann::json::object();
  std::uint64_t offset = 4 + 4 + 4 + 8;
  for (const auto& [key, v] : entries_) {
    offsets[hex_u64(key)] = offset;
    write_pod<std::uint64_t>(out, key);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
    offset += 8 + v.size() * sizeof(float);
  }
  std::ofstream idx(path.string() + ".json", std::ios::binary | std::ios::trunc);
  idx << nlohmann::json{{"magic", "TREC"},
                        {"version", kVersion},
                        {"dim", dim_},
                        {"count", entries_.size()},
                        {"offsets", offsets}}
             .dump(1)
      << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::optional<Embedding> EmbeddingCache::get(std::uint64_t key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return Embedding{std::vector<double>(it->second.begin(), it->second.end())};
}

Embedding EmbeddingCache::put(std::uint64_t key, const Embedding& value) {
  if (value.dim() != dim_) {
    throw ConfigError("embedding of dim " + std::to_string(value.dim()) +
                      " does not match cache dim " + std::to_string(dim_));
  }
  std::vector<float> stored(value.values.begin(), value.values.end());
  Embedding out{std::vector<double>(stored.begin(), stored.end())};
  std::unique_lock lock(mu_);
  entries_.insert_or_assign(key, std::move(stored));
  return out;
}

std::vector<Embedding> encode_cached(TextEncoder& encoder, EmbeddingCache& cache,
                                     std::span<const std::string> texts) {
  if (encoder.dim() != cache.dim()) {
    throw ConfigError("encoder dim " + std::to_string(encoder.dim()) + " != cache dim " +
                      std::to_string(cache.dim()));
  }
  std::vector<std::string> missing;
  std::unordered_map<std::uint64_t, std::size_t> pending;
  for (const auto& t : texts) {
    const auto key = text_key(t);
    if (!cache.get(key) && !pending.contains(key)) {
      pending.emplace(key, missing.size());
      missing.push_back(t);
    }
  }
  if (!missing.empty()) {
    auto fresh = encoder.encode(missing);
    for (std::size_t i = 0; i < missing.size(); ++i) cache.put(text_key(missing[i]), fresh[i]);
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(*cache.get(text_key(t)));
  return out;
}

std::string item_text(const ItemMeta& meta) {
  return meta.title + ". " + utf8_prefix(meta.description, 1000);
}

Embedding encode_item(const ItemMeta& meta, TextEncoder& encoder, EmbeddingCache& cache) {
  const std::string text = item_text(meta);
  try {
    return encode_cached(encoder, cache, std::span(&text, 1)).front();
  } catch (const BackendError& e) {
    throw BackendError("item " + meta.item_id + ": " + e.what(), e.fatal());
  }
}

}  // namespace temporec
