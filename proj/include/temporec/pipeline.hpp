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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "temporec/dataset.hpp"
#include "temporec/experiment.hpp"
#include "temporec/model.hpp"
#include "temporec/profiles.hpp"
#include "temporec/synth.hpp"

namespace temporec {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Typed view of the JSON run configuration. Relative paths resolve against
// the directory of the config file.
struct RunConfig {
  nlohmann::json doc;
  std::filesystem::path work_dir;
  // Empty means "the synth stage output under work_dir".
  std::filesystem::path interactions;
  std::filesystem::path items;
  InteractionFormat format = InteractionFormat::kJsonl;

  bool filter_items = true;
  std::size_t min_desc_chars = 500;
  double min_ascii_ratio = 0.9;
  SplitRatios ratios;
  std::size_t min_interactions = 3;

  std::string chat_backend = "template";
  std::string chat_model = "gpt-4o-mini";
  std::filesystem::path prompts_dir;
  ProfileOptions profile;

  std::string encoder_backend = "hash";
  std::size_t d = 384;

  std::size_t h = 128;
  TrainConfig train;
  std::size_t mf_k = 64;
  std::vector<Method> methods;
  std::vector<ScoringVariant> variants;
  Method baseline = Method::kCentric;
  std::vector<std::uint64_t> seeds;

  SynthConfig synth;

  ExperimentSettings settings(std::uint64_t seed) const;
};

nlohmann::json default_config();

// Sets a dotted key ("train.learning_rate=0.01"). The value is parsed as
// JSON when possible and taken as a string otherwise. Unknown keys are a
// ConfigError.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Merges `doc` over the defaults and validates it.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

// Reads the config file, applies --set overrides, then --seed (which sets
// both the training seeds and the synth seed).
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {},
                      std::optional<std::uint64_t> seed = {});

enum class Stage { kSynth, kIngest, kProfile, kEncode, kTrain, kEvaluate, kAblate, kReport };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view name);

struct StageOutcome {
  Stage stage = Stage::kSynth;
  bool reused = false;
  std::filesystem::path manifest;
};

// Runs one stage. Upstream manifests must exist, match the current config
// and still describe the files on disk; otherwise a ConfigError asks to
// rerun the upstream stage. A stage whose inputs are unchanged is skipped.
StageOutcome run_stage(Stage stage, const RunConfig& cfg, std::ostream& log);

// Stage-relevant slice of the config; its hash gates reuse.
nlohmann::json stage_config(Stage stage, const RunConfig& cfg);

// Item and profile embeddings plus the split, as written by the encode stage.
ExperimentData load_experiment(const RunConfig& cfg);

}  // namespace temporec
