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

#include "temporec/http.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>

#include "temporec/error.hpp"

namespace temporec {
namespace {

httplib::Client make_client(const BaseUrl& base, const RetryPolicy& policy) {
  httplib::Client cli(base.origin);
  const auto timeout = std::chrono::duration<double>(policy.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

template <typename Send>
nlohmann::json with_retries(const RetryPolicy& policy, const std::string& what, Send&& send) {
  std::string last_error;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = policy.backoff_base_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Result res = send();
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status >= 200 && status < 300) {
      nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) {
        throw BackendError(what + ": response is not valid JSON", true);
      }
      return parsed;
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    throw BackendError(what + ": HTTP " + std::to_string(status) + " " + res->body, true);
  }
  throw BackendError(what + ": " + last_error + " after " +
                     std::to_string(policy.max_retries) + " retries");
}

}  // namespace

BaseUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("base URL must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  BaseUrl b;
  if (path_start == std::string::npos) {
    b.origin = url;
  } else {
    b.origin = url.substr(0, path_start);
    b.path_prefix = url.substr(path_start);
    while (!b.path_prefix.empty() && b.path_prefix.back() == '/') b.path_prefix.pop_back();
  }
  return b;
}

nlohmann::json post_json(const BaseUrl& base, const std::string& path,
                         const nlohmann::json& body, const Headers& headers,
                         const RetryPolicy& policy, const std::string& what) {
  auto cli = make_client(base, policy);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  const std::string payload = body.dump();
  const std::string full_path = base.path_prefix + path;
  return with_retries(policy, what, [&] {
    return cli.Post(full_path, h, payload, "application/json");
  });
}

nlohmann::json get_json(const BaseUrl& base, const std::string& path,
                        const RetryPolicy& policy, const std::string& what) {
  auto cli = make_client(base, policy);
  const std::string full_path = base.path_prefix + path;
  return with_retries(policy, what, [&] { return cli.Get(full_path); });
}

}  // namespace temporec
