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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "temporec/dataset.hpp"
#include "temporec/http.hpp"

namespace temporec {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

// Signed feature hashing: each token adds +-1 at FNV-1a(token) mod d (sign
// from bit 63), then the vector is L2-normalized. Empty input gives zeros.
Embedding encode_hash(std::string_view text, std::size_t d = 384);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  // One embedding per input, in input order.
  virtual std::vector<Embedding> encode(std::span<const std::string> texts) = 0;
};

class HashEncoder final : public TextEncoder {
 public:
  explicit HashEncoder(std::size_t d = 384);
  std::size_t dim() const override { return d_; }
  std::string name() const override { return "hash-fnv1a"; }
  std::vector<Embedding> encode(std::span<const std::string> texts) override;

 private:
  std::size_t d_;
};

struct EmbedConfig {
  std::string base_url;
  std::size_t dim = 384;
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 2;
  RetryPolicy retry;

  // TEMPOREC_EMBED_BASE.
  static EmbedConfig from_env();
};

// Client for the embedding sidecar: POST {base}/embed, GET {base}/health.
class RemoteEncoder final : public TextEncoder {
 public:
  explicit RemoteEncoder(EmbedConfig cfg);
  std::size_t dim() const override { return cfg_.dim; }
  std::string name() const override { return "remote"; }
  std::vector<Embedding> encode(std::span<const std::string> texts) override;

  nlohmann::json health();

 private:
  std::vector<Embedding> encode_batch(std::span<const std::string> texts);

  EmbedConfig cfg_;
  BaseUrl base_;
};

std::uint64_t text_key(std::string_view text);

// Embedding store keyed by text hash. Values are held as 32-bit floats, the
// width of the on-disk format, so a save/load round trip is exact.
//
// Binary layout (little-endian): "TREC", version u32, dim u32, count u64,
// then per record key u64 followed by dim float32 values. A JSON index
// beside the file maps hex keys to byte offsets.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::size_t dim) : dim_(dim) {}
  EmbeddingCache(EmbeddingCache&& other) noexcept;
  EmbeddingCache& operator=(EmbeddingCache&&) = delete;

  static EmbeddingCache load(const std::filesystem::path& path);
  // Writes `path` and `path` + ".json"; records are in key order.
  void save(const std::filesystem::path& path) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const;
  std::optional<Embedding> get(std::uint64_t key) const;
  // Stores `value` rounded to float32 and returns the stored embedding.
  Embedding put(std::uint64_t key, const Embedding& value);

 private:
  std::size_t dim_;
  mutable std::shared_mutex mu_;
  std::map<std::uint64_t, std::vector<float>> entries_;
};

// Encodes through the cache: hits are served from it, misses are sent to
// `encoder` once per distinct text and stored. Returns the cached values.
std::vector<Embedding> encode_cached(TextEncoder& encoder, EmbeddingCache& cache,
                                     std::span<const std::string> texts);

// "title. description" with the description cut to 1000 code points.
std::string item_text(const ItemMeta& meta);

Embedding encode_item(const ItemMeta& meta, TextEncoder& encoder, EmbeddingCache& cache);

}  // namespace temporec
