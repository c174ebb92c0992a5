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
#include <string>
#include <string_view>
#include <vector>

namespace temporec {

// Lowercases ASCII and splits on runs of characters that are neither ASCII
// alphanumerics nor part of a multi-byte UTF-8 sequence.
std::vector<std::string> tokenize(std::string_view text);

// First `n` code points of a UTF-8 string.
std::string utf8_prefix(std::string_view s, std::size_t n);
std::size_t utf8_length(std::string_view s);

// YYYY-MM-DD in UTC for a Unix timestamp.
std::string iso_date(std::int64_t unix_seconds);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace temporec
