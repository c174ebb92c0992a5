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

#include <span>
#include <string>
#include <string_view>

#include "temporec/eval.hpp"

namespace temporec {

// Row label for a method or variant report ("llm_tp" -> "LLM-TP",
// "variant_short_only" -> "Short-Term Only (ST)"). Unknown names pass
// through unchanged.
std::string display_name(std::string_view method);

// Method comparison table: one row per report, an asterisk on values that
// are significantly better than `baseline` (p < 0.05, paired t-test), and
// a "Gain of <subject> vs. <baseline>" percentage row when both are present.
std::string render_method_table(std::span<const EvalReport> reports, std::string_view baseline,
                                std::string_view subject = "llm_tp");
std::string render_method_csv(std::span<const EvalReport> reports, std::string_view baseline,
                              std::string_view subject = "llm_tp");

// Ablation table over variant reports, in the order given.
std::string render_ablation_table(std::span<const EvalReport> reports);
std::string render_ablation_csv(std::span<const EvalReport> reports);

// Relative gain in percent; NaN when the reference is zero.
double gain_percent(double value, double reference);

}  // namespace temporec
