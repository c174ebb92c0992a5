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

// temporec command-line driver: one subcommand per pipeline stage.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "temporec/error.hpp"
#include "temporec/pipeline.hpp"

namespace {

constexpr const char* kStages[] = {"synth", "ingest", "profile", "encode",
                                   "train", "evaluate", "ablate", "report"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal user-profile recommender pipeline"};
  app.set_version_flag("--version", std::string(temporec::kToolVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
    sub->add_option("--seed", seed, "Seed for training and synthetic data");
    return sub;
  };
  add("synth", "Generate a synthetic drift dataset");
  add("ingest", "Filter items, split interactions and write dataset statistics");
  add("profile", "Generate short-term, long-term and general user profiles");
  add("encode", "Embed item texts and profiles");
  add("train", "Train the configured methods");
  add("evaluate", "Evaluate trained methods on the test split");
  add("ablate", "Train and evaluate the scoring variants");
  add("report", "Render the comparison and ablation tables");
  add("all", "Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(temporec::ExitCode::kUsage);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = temporec::load_config(config_path, overrides, seed);
    std::vector<temporec::Stage> stages;
    if (cmd == "all") {
      for (const char* s : kStages) stages.push_back(temporec::stage_from_string(s));
    } else {
      stages.push_back(temporec::stage_from_string(cmd));
    }
    for (auto s : stages) temporec::run_stage(s, cfg, std::cout);
  } catch (const temporec::Error& e) {
    std::cerr << "temporec " << cmd << ": " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "temporec " << cmd << ": " << e.what() << '\n';
    return static_cast<int>(temporec::ExitCode::kData);
  }
  return 0;
}
