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

#include "temporec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "temporec/error.hpp"

namespace temporec {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr char kMagic[4] = {'T', 'M', 'L', 'P'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string where) : in_(in), where_(std::move(where)) {
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }
  template <typename T>
  T pod() {
    T v{};
    read(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) fail("string too long");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::vector<double> doubles(std::uint64_t n) {
    // Checked against the bytes left so a corrupt count cannot allocate.
    const auto left = size_ - static_cast<std::uint64_t>(in_.tellg());
    if (n > left / sizeof(double)) fail("truncated");
    std::vector<double> v(n);
    read(v.data(), n * sizeof(double));
    return v;
  }
  [[noreturn]] void fail(const std::string& why) {
    throw DataError(where_ + ": corrupt checkpoint (" + why + ")");
  }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated");
  }
  std::ifstream& in_;
  std::string where_;
  std::uint64_t size_ = 0;
};

const Tensor& find(const Checkpoint& c, const std::string& name) {
  for (const auto& t : c.tensors) {
    if (t.name == name) return t;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

void copy_into(const Tensor& t, std::span<double> dst) {
  if (t.data.size() != dst.size()) {
    throw DataError("checkpoint tensor '" + t.name + "' has " + std::to_string(t.data.size()) +
                    " values, expected " + std::to_string(dst.size()));
  }
  std::copy(t.data.begin(), t.data.end(), dst.begin());
}

Tensor tensor(std::string name, std::uint64_t rows, std::uint64_t cols,
              std::span<const double> v) {
  return {std::move(name), rows, cols, std::vector<double>(v.begin(), v.end())};
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.pod(kCheckpointVersion);
  w.pod(c.d);
  w.pod(c.h);
  w.str(c.method);
  w.str(c.variant);
  w.pod(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.pod(t.rows);
    w.pod(t.cols);
    w.doubles(t.data);
  }
  w.pod(c.adam.t);
  w.pod(static_cast<std::uint64_t>(c.adam.m.size()));
  w.doubles(c.adam.m);
  w.doubles(c.adam.v);
  if (!out) throw DataError("write failed for checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
  if (r.pod<std::uint32_t>() != kCheckpointVersion) r.fail("unsupported version");
  Checkpoint c;
  c.d = r.pod<std::uint32_t>();
  c.h = r.pod<std::uint32_t>();
  c.method = r.str();
  c.variant = r.str();
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    Tensor t;
    t.name = r.str();
    t.rows = r.pod<std::uint64_t>();
    t.cols = r.pod<std::uint64_t>();
    t.data = r.doubles(t.rows * t.cols);
    c.tensors.push_back(std::move(t));
  }
  c.adam.t = r.pod<std::uint64_t>();
  const auto m = r.pod<std::uint64_t>();
  c.adam.m = r.doubles(m);
  c.adam.v = r.doubles(m);
  if (in.peek() != std::ifstream::traits_type::eof()) r.fail("trailing bytes");
  return c;
}

Checkpoint to_checkpoint(const std::string& method, const ScorerParams& p,
                         const AdamState& adam) {
  Checkpoint c;
  c.method = method;
  c.variant = std::string(to_string(p.shape().variant));
  c.d = static_cast<std::uint32_t>(p.d());
  c.h = static_cast<std::uint32_t>(p.h());
  c.tensors.push_back(tensor("w_a", 1, p.d(), p.w_a()));
  c.tensors.push_back(tensor("w1", p.h(), 2 * p.d(), p.w1()));
  c.tensors.push_back(tensor("b1", 1, p.h(), p.b1()));
  c.tensors.push_back(tensor("w2", 1, p.h(), p.w2()));
  const double b2 = p.b2();
  c.tensors.push_back(tensor("b2", 1, 1, {&b2, 1}));
  c.adam = adam;
  return c;
}

ScorerParams scorer_from_checkpoint(const Checkpoint& c) {
  ModelShape shape{c.d, c.h, scoring_variant_from_string(c.variant)};
  ScorerParams p(shape);
  copy_into(find(c, "w_a"), p.w_a());
  copy_into(find(c, "w1"), p.w1());
  copy_into(find(c, "b1"), p.b1());
  copy_into(find(c, "w2"), p.w2());
  copy_into(find(c, "b2"), {&p.b2(), 1});
  return p;
}

Checkpoint to_checkpoint(const std::string& method, const MfParams& p, const AdamState& adam) {
  Checkpoint c;
  c.method = method;
  c.variant = "mf";
  c.d = static_cast<std::uint32_t>(p.k());
  const auto flat = p.flat();
  const std::size_t nu = p.n_users(), ni = p.n_items(), k = p.k();
  c.tensors.push_back(tensor("user_factors", nu, k, flat.subspan(0, nu * k)));
  c.tensors.push_back(tensor("item_factors", ni, k, flat.subspan(nu * k, ni * k)));
  c.tensors.push_back(tensor("user_bias", 1, nu, flat.subspan((nu + ni) * k, nu)));
  c.tensors.push_back(tensor("item_bias", 1, ni, flat.subspan((nu + ni) * k + nu, ni)));
  c.adam = adam;
  return c;
}

MfParams mf_from_checkpoint(const Checkpoint& c) {
  const auto& uf = find(c, "user_factors");
  const auto& itf = find(c, "item_factors");
  MfParams p(uf.rows, itf.rows, uf.cols);
  const std::size_t nu = p.n_users(), ni = p.n_items(), k = p.k();
  auto flat = p.flat();
  copy_into(uf, flat.subspan(0, nu * k));
  copy_into(itf, flat.subspan(nu * k, ni * k));
  copy_into(find(c, "user_bias"), flat.subspan((nu + ni) * k, nu));
  copy_into(find(c, "item_bias"), flat.subspan((nu + ni) * k + nu, ni));
  return p;
}

}  // namespace temporec
