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

#include "temporec/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "temporec/checkpoint.hpp"
#include "temporec/encoder.hpp"
#include "temporec/error.hpp"
#include "temporec/hash.hpp"
#include "temporec/report.hpp"

namespace temporec {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!out) throw DataError("write failed for " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// Recursively overlays `src` on `dst`; keys must already exist in `dst`
// unless the default there is null.
void merge_checked(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    json& slot = dst[key];
    if (slot.is_object() && key != "synth_extra") {
      merge_checked(slot, value, name);
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const json& doc, const json::json_pointer& ptr) {
  try {
    return doc.at(ptr).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + ptr.to_string() + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const json& v) {
  if (v.is_null()) return {};
  if (!v.is_string()) throw ConfigError("config paths must be strings");
  fs::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::string rel(const RunConfig& cfg, const fs::path& p) {
  auto r = p.lexically_proximate(cfg.work_dir);
  return r.empty() || *r.begin() == ".." ? p.generic_string() : r.generic_string();
}

fs::path interactions_path(const RunConfig& cfg) {
  return cfg.interactions.empty() ? cfg.work_dir / "synth" / "interactions.jsonl"
                                  : cfg.interactions;
}

fs::path items_path(const RunConfig& cfg) {
  return cfg.items.empty() ? cfg.work_dir / "synth" / "items.jsonl" : cfg.items;
}

fs::path manifest_path(const RunConfig& cfg, Stage s) {
  return cfg.work_dir / "manifests" / (std::string(to_string(s)) + ".json");
}

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::kSynth:
    case Stage::kIngest: return {};
    case Stage::kProfile: return {Stage::kIngest};
    case Stage::kEncode: return {Stage::kIngest, Stage::kProfile};
    case Stage::kTrain: return {Stage::kEncode};
    case Stage::kEvaluate: return {Stage::kTrain};
    case Stage::kAblate: return {Stage::kEncode};
    case Stage::kReport: return {Stage::kEvaluate};
  }
  return {};
}

std::string rerun(Stage s) { return "rerun stage " + std::string(to_string(s)); }

json input_hashes(const RunConfig& cfg, Stage s) {
  json inputs = json::object();
  if (s == Stage::kIngest) {
    for (const auto& [role, path] : {std::pair{"interactions", interactions_path(cfg)},
                                     std::pair{"items", items_path(cfg)}}) {
      if (!fs::exists(path)) throw DataError(std::string(role) + " file not found: " + path.string());
      inputs[role] = {{"path", rel(cfg, path)}, {"sha256", file_sha256(path)}};
    }
  }
  return inputs;
}

// Why the recorded manifest of `s` no longer describes the current state,
// or nullopt when it does. Upstream manifests are checked recursively.
std::optional<std::string> stale_reason(const RunConfig& cfg, Stage s) {
  const auto path = manifest_path(cfg, s);
  const std::string name(to_string(s));
  if (!fs::exists(path)) return "stage '" + name + "' has not run";
  const json m = read_json(path);
  if (m.value("tool_version", "") != kToolVersion) return "stage '" + name + "' ran with another tool version";
  if (m.value("config_hash", "") != sha256_hex(stage_config(s, cfg).dump())) {
    return "config of stage '" + name + "' changed";
  }
  for (const auto& [artifact, sha] : m.at("artifacts").items()) {
    const auto p = cfg.work_dir / artifact;
    if (!fs::exists(p) || file_sha256(p) != sha.get<std::string>()) {
      return "artifact " + artifact + " of stage '" + name + "' is missing or modified";
    }
  }
  if (s == Stage::kIngest) {
    json now;
    try {
      now = input_hashes(cfg, s);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    if (now != m.at("inputs")) return "inputs of stage 'ingest' changed";
  }
  for (const auto& [up, sha] : m.at("upstream").items()) {
    const Stage u = stage_from_string(up);
    if (auto why = stale_reason(cfg, u)) return why;
    if (file_sha256(manifest_path(cfg, u)) != sha.get<std::string>()) {
      return "stage '" + up + "' was rerun after stage '" + name + "'";
    }
  }
  return std::nullopt;
}

// Throws unless every upstream of `s` is present and current.
json require_upstream(const RunConfig& cfg, Stage s, const std::vector<Stage>& ups) {
  json upstream = json::object();
  for (Stage u : ups) {
    if (auto why = stale_reason(cfg, u)) {
      throw ConfigError("cannot run stage '" + std::string(to_string(s)) + "': " + *why + "; " +
                        rerun(u));
    }
    upstream[std::string(to_string(u))] = file_sha256(manifest_path(cfg, u));
  }
  return upstream;
}

struct StageOutput {
  std::vector<fs::path> artifacts;
  std::vector<fs::path> logs;
  json extra = json::object();
};

std::string seed_tag(std::uint64_t seed) { return ".seed" + std::to_string(seed); }

SplitDataset load_split(const RunConfig& cfg) {
  return split_from_json(read_json(cfg.work_dir / "data" / "split.json"));
}

json epoch_summary(const std::vector<EpochLog>& log) {
  json a = json::array();
  for (const auto& e : log) {
    a.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_recall@10", e.val_recall10}});
  }
  return a;
}

void write_log(const fs::path& p, const std::vector<EpochLog>& log) {
  std::string text;
  for (const auto& e : log) text += to_json(e).dump() + "\n";
  write_text(p, text);
}

// Saves a trained scorer or MF model with its sidecar and epoch log.
void save_trained(const RunConfig& cfg, const TrainedMethod& tm, std::uint64_t seed,
                  StageOutput& out, std::ostream& log) {
  const std::string base = tm.name + seed_tag(seed);
  const auto ckpt_path = cfg.work_dir / "checkpoints" / (base + ".tmlp");
  fs::create_directories(ckpt_path.parent_path());
  json side = {{"method", tm.name}, {"seed", seed}, {"variant", to_string(tm.variant)},
               {"train", to_json(cfg.settings(seed).train)}};
  const std::vector<EpochLog>* epochs = nullptr;
  if (tm.scorer) {
    write_checkpoint(ckpt_path, to_checkpoint(tm.name, tm.scorer->params, tm.scorer->adam));
    side["d"] = tm.scorer->params.d();
    side["h"] = tm.scorer->params.h();
    side["best_epoch"] = tm.scorer->best_epoch;
    side["best_val_recall@10"] = tm.scorer->best_val_recall10;
    epochs = &tm.scorer->log;
  } else if (tm.mf) {
    write_checkpoint(ckpt_path, to_checkpoint(tm.name, tm.mf->params, tm.mf->adam));
    side["variant"] = "mf";
    side["k"] = tm.mf->params.k();
    side["best_epoch"] = tm.mf->best_epoch;
    side["best_val_recall@10"] = tm.mf->best_val_recall10;
    epochs = &tm.mf->log;
  } else {
    return;
  }
  side["epochs"] = epoch_summary(*epochs);
  const auto side_path = cfg.work_dir / "checkpoints" / (base + ".json");
  write_json(side_path, side);
  const auto log_path = cfg.work_dir / "train" / (base + ".log.jsonl");
  write_log(log_path, *epochs);
  out.artifacts.push_back(ckpt_path);
  out.artifacts.push_back(side_path);
  out.logs.push_back(log_path);
  log << "  " << tm.name << " seed " << seed << ": best epoch " << side["best_epoch"]
      << ", val recall@10 " << side["best_val_recall@10"] << '\n';
}

TrainedMethod load_trained(const RunConfig& cfg, const ExperimentData& data,
                           const std::string& name, Method m, ScoringVariant v,
                           std::uint64_t seed) {
  TrainedMethod tm;
  tm.name = name;
  tm.method = m;
  tm.variant = v;
  if (m == Method::kPopularity) {
    tm.popularity = popularity_scores(data.index);
    return tm;
  }
  const auto ckpt = read_checkpoint(cfg.work_dir / "checkpoints" / (name + seed_tag(seed) + ".tmlp"));
  if (m == Method::kMf) {
    tm.mf = MfTrainResult{};
    tm.mf->params = mf_from_checkpoint(ckpt);
    return tm;
  }
  tm.scorer = TrainResult{};
  tm.scorer->params = scorer_from_checkpoint(ckpt);
  tm.features = m == Method::kLlmTp ? data.profiles : method_features(m, data, cfg.profile.recent_k);
  return tm;
}

// Evaluates every seed of one method, writes per-seed reports and returns
// the seed average.
EvalReport evaluate_over_seeds(const RunConfig& cfg, const ExperimentData& data,
                               const std::string& name, Method m, ScoringVariant v,
                               StageOutput& out) {
  std::vector<EvalReport> runs;
  for (auto seed : cfg.seeds) {
    auto report = evaluate_trained(load_trained(cfg, data, name, m, v, seed), data);
    const auto p = cfg.work_dir / "reports" / (name + seed_tag(seed) + ".json");
    write_json(p, report_to_json(report));
    out.artifacts.push_back(p);
    runs.push_back(std::move(report));
  }
  return average_reports(runs);
}

StageOutput do_synth(const RunConfig& cfg, std::ostream& log) {
  const auto dir = cfg.work_dir / "synth";
  const auto data = generate(cfg.synth);
  write_synth(data, dir);
  log << "  " << data.users.size() << " users, " << data.items.size() << " items, "
      << data.interactions.size() << " interactions\n";
  return {{dir / "interactions.jsonl", dir / "items.jsonl", dir / "truth.json"}, {}, {}};
}

StageOutput do_ingest(const RunConfig& cfg, std::ostream& log) {
  const auto rows = load_interactions(interactions_path(cfg), cfg.format);
  const auto meta = load_item_meta(items_path(cfg));
  const auto kept = cfg.filter_items
                        ? filter_items(meta, cfg.min_desc_chars, cfg.min_ascii_ratio)
                        : meta;
  const auto retained = restrict_to_items(rows, kept);
  if (retained.empty()) throw DataError("no interactions left after item filtering");
  const auto split = temporal_split(retained, cfg.ratios, cfg.min_interactions);

  std::vector<ItemMeta> catalog_meta;
  for (const auto& m : kept) {
    if (split.item_index(m.item_id)) catalog_meta.push_back(m);
  }
  std::sort(catalog_meta.begin(), catalog_meta.end(),
            [](const ItemMeta& a, const ItemMeta& b) { return a.item_id < b.item_id; });

  const auto dir = cfg.work_dir / "data";
  fs::create_directories(dir);
  write_text(dir / "split.json", split_to_json(split).dump() + "\n");
  write_item_meta_jsonl(dir / "items.jsonl", catalog_meta);
  json stats = stats_to_json(split.stats);
  stats["n_interactions_raw"] = rows.size();
  stats["n_items_raw"] = meta.size();
  stats["n_items_after_filter"] = kept.size();
  write_json(dir / "stats.json", stats);
  write_json(dir / "split_manifest.json", split_manifest(split));
  log << "  " << split.stats.n_users << " users, " << split.stats.n_items << " items, "
      << split.stats.n_interactions << " interactions (mean profile size "
      << split.stats.profile_size_mean << ")\n";
  return {{dir / "split.json", dir / "items.jsonl", dir / "stats.json", dir / "split_manifest.json"},
          {},
          {}};
}

PromptSet load_prompts(const RunConfig& cfg) {
  return cfg.prompts_dir.empty() ? PromptSet{} : PromptSet::from_dir(cfg.prompts_dir);
}

StageOutput do_profile(const RunConfig& cfg, std::ostream& log) {
  const auto split = load_split(cfg);
  const auto items = load_item_meta(cfg.work_dir / "data" / "items.jsonl");
  std::unique_ptr<ProfileBackend> backend;
  if (cfg.chat_backend == "template") {
    backend = std::make_unique<TemplateBackend>();
  } else {
    auto chat = ChatConfig::from_env();
    chat.model = cfg.chat_model;
    backend = std::make_unique<ChatBackend>(chat);
  }
  fs::create_directories(cfg.work_dir / "profiles");
  ProfileCache cache(cfg.work_dir / "profiles" / "cache.jsonl");
  const auto profiles =
      generate_profiles(split, index_items(items), load_prompts(cfg), *backend, &cache, cfg.profile);
  const auto out = cfg.work_dir / "profiles" / "profiles.json";
  write_json(out, profiles_to_json(profiles));
  log << "  " << profiles.size() << " profiles via " << backend->model_id() << '\n';
  return {{out}, {}, {}};
}

StageOutput do_encode(const RunConfig& cfg, std::ostream& log) {
  auto split = load_split(cfg);
  const auto items = load_item_meta(cfg.work_dir / "data" / "items.jsonl");
  const auto profiles = profiles_from_json(read_json(cfg.work_dir / "profiles" / "profiles.json"));
  std::unique_ptr<TextEncoder> encoder;
  if (cfg.encoder_backend == "hash") {
    encoder = std::make_unique<HashEncoder>(cfg.d);
  } else {
    auto ec = EmbedConfig::from_env();
    ec.dim = cfg.d;
    encoder = std::make_unique<RemoteEncoder>(ec);
  }
  const auto dir = cfg.work_dir / "embeddings";
  fs::create_directories(dir);
  const auto cache_path = dir / ("cache." + encoder->name() + ".trec");
  EmbeddingCache cache = [&] {
    if (!fs::exists(cache_path)) return EmbeddingCache(cfg.d);
    auto loaded = EmbeddingCache::load(cache_path);
    if (loaded.dim() == cfg.d) return loaded;
    log << "  embedding cache has dim " << loaded.dim() << ", starting a fresh one\n";
    return EmbeddingCache(cfg.d);
  }();
  const auto data = prepare_experiment(std::move(split), items, profiles, *encoder, &cache);
  cache.save(cache_path);

  Checkpoint c;
  c.method = "embeddings";
  c.variant = encoder->name();
  c.d = static_cast<std::uint32_t>(cfg.d);
  auto add = [&](const char* name, const Matrix& m) {
    c.tensors.push_back({name, m.rows(), m.cols(), std::vector<double>(m.flat().begin(), m.flat().end())});
  };
  add("items", data.items);
  add("short_term", data.profiles.short_term);
  add("long_term", data.profiles.long_term);
  add("general", data.profiles.general);
  const auto out = dir / "features.tmlp";
  write_checkpoint(out, c);
  log << "  " << data.items.rows() << " items and " << data.profiles.short_term.rows()
      << " users encoded with " << encoder->name() << " (d=" << cfg.d << ")\n";
  return {{out}, {}, {}};
}

StageOutput do_train(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_experiment(cfg);
  StageOutput out;
  for (auto seed : cfg.seeds) {
    for (auto m : cfg.methods) {
      if (m == Method::kPopularity) continue;
      save_trained(cfg, train_method(m, data, cfg.settings(seed)), seed, out, log);
    }
  }
  return out;
}

StageOutput do_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_experiment(cfg);
  StageOutput out;
  std::map<Method, EvalReport> combined;
  for (auto m : cfg.methods) {
    combined[m] = evaluate_over_seeds(cfg, data, std::string(to_string(m)), m, method_variant(m), out);
  }
  const auto& base = combined.at(cfg.baseline);
  json summary = json::object();
  for (auto m : cfg.methods) {
    auto& r = combined.at(m);
    if (m != cfg.baseline) add_significance(r, base);
    const auto p = cfg.work_dir / "reports" / (r.method + ".json");
    write_json(p, report_to_json(r));
    out.artifacts.push_back(p);
    summary[r.method] = r.aggregate;
    log << "  " << r.method << ": recall@10 " << r.aggregate.at("recall@10") << ", ndcg@10 "
        << r.aggregate.at("ndcg@10") << '\n';
  }
  const auto sp = cfg.work_dir / "reports" / "summary.json";
  write_json(sp, summary);
  out.artifacts.push_back(sp);
  return out;
}

StageOutput do_ablate(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_experiment(cfg);
  StageOutput out;
  std::vector<EvalReport> combined;
  for (auto v : cfg.variants) {
    for (auto seed : cfg.seeds) {
      save_trained(cfg, train_variant(v, data, cfg.settings(seed)), seed, out, log);
    }
    const std::string name = "variant_" + std::string(to_string(v));
    combined.push_back(evaluate_over_seeds(cfg, data, name, Method::kLlmTp, v, out));
  }
  const EvalReport* full = nullptr;
  for (const auto& r : combined) {
    if (r.method == "variant_full") full = &r;
  }
  for (auto& r : combined) {
    if (full && &r != full) add_significance(r, *full);
    const auto p = cfg.work_dir / "reports" / (r.method + ".json");
    write_json(p, report_to_json(r));
    out.artifacts.push_back(p);
    log << "  " << r.method << ": recall@20 " << r.aggregate.at("recall@20") << '\n';
  }
  return out;
}

StageOutput do_report(const RunConfig& cfg, std::ostream& log, bool with_ablation) {
  StageOutput out;
  const auto dir = cfg.work_dir / "reports";
  std::vector<EvalReport> methods;
  for (auto m : cfg.methods) {
    methods.push_back(report_from_json(read_json(dir / (std::string(to_string(m)) + ".json"))));
  }
  const std::string baseline(to_string(cfg.baseline));
  const auto table = render_method_table(methods, baseline);
  write_text(dir / "comparison.txt", table);
  write_text(dir / "comparison.csv", render_method_csv(methods, baseline));
  out.artifacts = {dir / "comparison.txt", dir / "comparison.csv"};
  log << table;
  if (with_ablation) {
    std::vector<EvalReport> variants;
    for (auto v : cfg.variants) {
      variants.push_back(
          report_from_json(read_json(dir / ("variant_" + std::string(to_string(v)) + ".json"))));
    }
    const auto ablation = render_ablation_table(variants);
    write_text(dir / "ablation.txt", ablation);
    write_text(dir / "ablation.csv", render_ablation_csv(variants));
    out.artifacts.push_back(dir / "ablation.txt");
    out.artifacts.push_back(dir / "ablation.csv");
    log << '\n' << ablation;
  }
  return out;
}

}  // namespace

ExperimentSettings RunConfig::settings(std::uint64_t seed) const {
  ExperimentSettings s;
  s.h = h;
  s.train = train;
  s.train.rng_seed = seed;
  s.mf_k = mf_k;
  s.recent_k = profile.recent_k;
  return s;
}

json default_config() {
  json methods = json::array();
  for (auto m : all_methods()) methods.push_back(to_string(m));
  return {
      {"work_dir", "work"},
      {"data", {{"interactions", nullptr}, {"items", nullptr}, {"format", "jsonl"}}},
      {"filter", {{"enabled", true}, {"min_desc_chars", 500}, {"min_ascii_ratio", 0.9}}},
      {"split", {{"ratios", {0.8, 0.1, 0.1}}, {"min_interactions", 3}}},
      {"profiles",
       {{"backend", "template"},
        {"model", "gpt-4o-mini"},
        {"prompts_dir", nullptr},
        {"recent_k", 5},
        {"max_items", 50},
        {"include_general", true},
        {"concurrency", 4}}},
      {"encoder", {{"backend", "hash"}, {"d", 384}}},
      {"model", {{"h", 128}}},
      {"train", to_json(TrainConfig{})},
      {"mf", {{"k", 64}}},
      {"methods", methods},
      {"variants", {"full", "short_only", "long_only", "general_only", "dot_product"}},
      {"baseline", "centric"},
      {"seeds", {42}},
      {"synth", to_json(SynthConfig{})},
  };
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json* slot = &doc;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!slot->is_object() || !slot->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    slot = &(*slot)[part];
  }
  json value = json::parse(raw, nullptr, false);
  *slot = value.is_discarded() ? json(raw) : value;
}

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
  json merged = default_config();
  merge_checked(merged, doc, "");
  RunConfig c;
  c.doc = merged;
  using P = json::json_pointer;
  c.work_dir = resolve(base_dir, merged.at("work_dir"));
  c.interactions = resolve(base_dir, merged.at(P("/data/interactions")));
  c.items = resolve(base_dir, merged.at(P("/data/items")));
  const auto format = get<std::string>(merged, P("/data/format"));
  if (format == "jsonl") {
    c.format = InteractionFormat::kJsonl;
  } else if (format == "csv") {
    c.format = InteractionFormat::kCsv;
  } else {
    throw ConfigError("data.format must be jsonl or csv");
  }
  c.filter_items = get<bool>(merged, P("/filter/enabled"));
  c.min_desc_chars = get<std::size_t>(merged, P("/filter/min_desc_chars"));
  c.min_ascii_ratio = get<double>(merged, P("/filter/min_ascii_ratio"));
  const auto ratios = get<std::vector<double>>(merged, P("/split/ratios"));
  if (ratios.size() != 3) throw ConfigError("split.ratios needs three values");
  c.ratios = {ratios[0], ratios[1], ratios[2]};
  c.min_interactions = get<std::size_t>(merged, P("/split/min_interactions"));

  c.chat_backend = get<std::string>(merged, P("/profiles/backend"));
  if (c.chat_backend != "template" && c.chat_backend != "remote") {
    throw ConfigError("profiles.backend must be template or remote");
  }
  c.chat_model = get<std::string>(merged, P("/profiles/model"));
  c.prompts_dir = resolve(base_dir, merged.at(P("/profiles/prompts_dir")));
  if (!c.prompts_dir.empty() && !fs::is_directory(c.prompts_dir)) {
    throw ConfigError("prompts_dir not found: " + c.prompts_dir.string());
  }
  c.profile.recent_k = get<std::size_t>(merged, P("/profiles/recent_k"));
  c.profile.max_items = get<std::size_t>(merged, P("/profiles/max_items"));
  c.profile.include_general = get<bool>(merged, P("/profiles/include_general"));
  c.profile.concurrency = get<std::size_t>(merged, P("/profiles/concurrency"));
  if (c.profile.recent_k == 0 || c.profile.max_items == 0 || c.profile.concurrency == 0) {
    throw ConfigError("profiles.recent_k, max_items and concurrency must be positive");
  }

  c.encoder_backend = get<std::string>(merged, P("/encoder/backend"));
  if (c.encoder_backend != "hash" && c.encoder_backend != "remote") {
    throw ConfigError("encoder.backend must be hash or remote");
  }
  c.d = get<std::size_t>(merged, P("/encoder/d"));
  if (c.d < 2) throw ConfigError("encoder.d must be at least 2");
  c.h = get<std::size_t>(merged, P("/model/h"));
  if (c.h == 0) throw ConfigError("model.h must be positive");
  try {
    c.train = train_config_from_json(merged.at("train"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.train.validate();
  c.mf_k = get<std::size_t>(merged, P("/mf/k"));
  if (c.mf_k == 0) throw ConfigError("mf.k must be positive");

  for (const auto& m : get<std::vector<std::string>>(merged, P("/methods"))) {
    c.methods.push_back(method_from_string(m));
  }
  for (const auto& v : get<std::vector<std::string>>(merged, P("/variants"))) {
    c.variants.push_back(scoring_variant_from_string(v));
  }
  c.baseline = method_from_string(get<std::string>(merged, P("/baseline")));
  if (std::find(c.methods.begin(), c.methods.end(), c.baseline) == c.methods.end()) {
    throw ConfigError("baseline '" + std::string(to_string(c.baseline)) + "' is not in methods");
  }
  c.seeds = get<std::vector<std::uint64_t>>(merged, P("/seeds"));
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  c.synth = synth_config_from_json(merged.at("synth"));
  return c;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  {
    std::ifstream in(path);
    doc = json::parse(in, nullptr, false);
  }
  if (doc.is_discarded() || !doc.is_object()) {
    throw ConfigError(path.string() + ": not a JSON object");
  }
  json merged = default_config();
  merge_checked(merged, doc, "");
  for (const auto& o : overrides) apply_override(merged, o);
  if (seed) {
    merged["seeds"] = {*seed};
    merged["synth"]["rng_seed"] = *seed;
  }
  return config_from_json(merged, fs::absolute(path).parent_path());
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kSynth: return "synth";
    case Stage::kIngest: return "ingest";
    case Stage::kProfile: return "profile";
    case Stage::kEncode: return "encode";
    case Stage::kTrain: return "train";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kAblate: return "ablate";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view name) {
  for (auto s : {Stage::kSynth, Stage::kIngest, Stage::kProfile, Stage::kEncode, Stage::kTrain,
                 Stage::kEvaluate, Stage::kAblate, Stage::kReport}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

json stage_config(Stage s, const RunConfig& c) {
  const json& d = c.doc;
  json out = {{"stage", to_string(s)}};
  auto seeds = d.at("seeds");
  switch (s) {
    case Stage::kSynth:
      out["synth"] = d.at("synth");
      break;
    case Stage::kIngest:
      out["format"] = d.at("data").at("format");
      out["filter"] = d.at("filter");
      out["split"] = d.at("split");
      break;
    case Stage::kProfile: {
      json p = d.at("profiles");
      p.erase("concurrency");
      p.erase("prompts_dir");
      const auto prompts = load_prompts(c);
      std::string text;
      for (const auto* t : {&prompts.short_term, &prompts.long_term, &prompts.general}) {
        text += t->system_text + '\0' + t->user_text_template + '\0';
      }
      p["prompts_sha256"] = sha256_hex(text);
      out["profiles"] = p;
      break;
    }
    case Stage::kEncode:
      out["encoder"] = d.at("encoder");
      break;
    case Stage::kTrain:
      out["model"] = d.at("model");
      out["train"] = d.at("train");
      out["mf"] = d.at("mf");
      out["methods"] = d.at("methods");
      out["seeds"] = seeds;
      out["recent_k"] = d.at("profiles").at("recent_k");
      break;
    case Stage::kEvaluate:
      out["methods"] = d.at("methods");
      out["baseline"] = d.at("baseline");
      out["seeds"] = seeds;
      break;
    case Stage::kAblate:
      out["model"] = d.at("model");
      out["train"] = d.at("train");
      out["variants"] = d.at("variants");
      out["seeds"] = seeds;
      break;
    case Stage::kReport:
      out["methods"] = d.at("methods");
      out["variants"] = d.at("variants");
      out["baseline"] = d.at("baseline");
      break;
  }
  return out;
}

ExperimentData load_experiment(const RunConfig& cfg) {
  ExperimentData data;
  data.split = load_split(cfg);
  data.index = index_split(data.split);
  const auto c = read_checkpoint(cfg.work_dir / "embeddings" / "features.tmlp");
  auto take = [&](const std::string& name, std::size_t rows) {
    for (const auto& t : c.tensors) {
      if (t.name != name) continue;
      if (t.rows != rows) {
        throw DataError("features tensor '" + name + "' has " + std::to_string(t.rows) +
                        " rows, expected " + std::to_string(rows) + "; rerun stage encode");
      }
      Matrix m(t.rows, t.cols);
      std::copy(t.data.begin(), t.data.end(), m.flat().begin());
      return m;
    }
    throw DataError("features file lacks tensor '" + name + "'; rerun stage encode");
  };
  data.items = take("items", data.split.item_catalog.size());
  data.profiles.short_term = take("short_term", data.split.users.size());
  data.profiles.long_term = take("long_term", data.split.users.size());
  data.profiles.general = take("general", data.split.users.size());
  return data;
}

StageOutcome run_stage(Stage stage, const RunConfig& cfg, std::ostream& log) {
  StageOutcome outcome{stage, false, manifest_path(cfg, stage)};
  const std::string name(to_string(stage));
  auto ups = upstream_of(stage);
  // The ablation table joins the report only when that stage has run.
  const bool with_ablation = stage == Stage::kReport && fs::exists(manifest_path(cfg, Stage::kAblate));
  if (with_ablation) ups.push_back(Stage::kAblate);
  const json upstream = require_upstream(cfg, stage, ups);
  if (!stale_reason(cfg, stage)) {
    log << "[" << name << "] up to date\n";
    outcome.reused = true;
    return outcome;
  }
  log << "[" << name << "]\n";
  const json inputs = input_hashes(cfg, stage);
  const auto t0 = std::chrono::steady_clock::now();
  StageOutput out;
  switch (stage) {
    case Stage::kSynth: out = do_synth(cfg, log); break;
    case Stage::kIngest: out = do_ingest(cfg, log); break;
    case Stage::kProfile: out = do_profile(cfg, log); break;
    case Stage::kEncode: out = do_encode(cfg, log); break;
    case Stage::kTrain: out = do_train(cfg, log); break;
    case Stage::kEvaluate: out = do_evaluate(cfg, log); break;
    case Stage::kAblate: out = do_ablate(cfg, log); break;
    case Stage::kReport: out = do_report(cfg, log, with_ablation); break;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json artifacts = json::object();
  for (const auto& p : out.artifacts) artifacts[rel(cfg, p)] = file_sha256(p);
  json logs = json::array();
  for (const auto& p : out.logs) logs.push_back(rel(cfg, p));
  const json manifest = {{"stage", name},
                         {"tool_version", kToolVersion},
                         {"config_hash", sha256_hex(stage_config(stage, cfg).dump())},
                         {"inputs", inputs},
                         {"upstream", upstream},
                         {"artifacts", artifacts},
                         {"logs", logs}};
  write_json(outcome.manifest, manifest);
  // Wall-clock time lives beside the manifest so the manifest itself stays
  // reproducible.
  write_json(cfg.work_dir / "manifests" / (name + ".timings.json"),
             {{"stage", name}, {"seconds", seconds}});
  return outcome;
}

}  // namespace temporec
