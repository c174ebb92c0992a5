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

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace temporec {

struct BaseUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/prefix" without trailing slash
};

BaseUrl parse_base_url(const std::string& url);

struct RetryPolicy {
  int max_retries = 3;
  // Delay before retry k (0-based) is backoff_base_s * 2^k.
  double backoff_base_s = 0.5;
  double timeout_s = 60.0;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

// POSTs `body` to base + path and returns the parsed JSON response.
// 429, 5xx and transport failures are retried per `policy`; any other 4xx
// throws a fatal BackendError immediately. `what` prefixes error messages.
nlohmann::json post_json(const BaseUrl& base, const std::string& path,
                         const nlohmann::json& body, const Headers& headers,
                         const RetryPolicy& policy, const std::string& what);

nlohmann::json get_json(const BaseUrl& base, const std::string& path,
                        const RetryPolicy& policy, const std::string& what);

}  // namespace temporec
