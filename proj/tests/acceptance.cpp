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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any
// hard criterion fails. The stability line is advisory only.

#include <arpa/inet.h>
#include <net/if.h>
#include <netinet/in.h>
#include <sched.h>
#include <sys/ioctl.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "temporec/experiment.hpp"
#include "temporec/fusion.hpp"
#include "temporec/kernels.hpp"
#include "temporec/pipeline.hpp"
#include "temporec/synth.hpp"
#include "test_util.hpp"

namespace {

using namespace temporec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_hard_failures = 0;

void report(const char* name, const Verdict& v, bool soft = false) {
  if (!v.pass && !soft) ++g_hard_failures;
  std::printf("%s %s: %s%s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(),
              !v.pass && soft ? " (soft criterion: warning only)" : "");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- gradients

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  const ScoringVariant variants[] = {ScoringVariant::kFull, ScoringVariant::kShortOnly,
                                     ScoringVariant::kLongOnly, ScoringVariant::kGeneralOnly,
                                     ScoringVariant::kDotProduct};
  double worst = 0;
  int n = 0, bad = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (const auto v : variants) {
      const std::size_t d = 2 + seed % 7;  // 2..8
      const std::size_t h = 1 + seed % 4;  // 1..4
      const auto in = oracle::smooth_instance(500 + seed, d, h, v, 12, seed % 2 == 1);
      for (auto fn : {kernels::batch_gradient_serial, kernels::batch_gradient}) {
        const auto g = oracle::check_gradient(in, fn);
        worst = std::max(worst, g.max_rel_error);
        bad += g.max_rel_error >= 1e-4 || g.loss_gap > 1e-12;
        ++n;
      }
    }
  }
  const double secs = since(t0);
  return {bad == 0 && n >= 20 && secs < 10.0,
          fmt("%d instances (all variants incl. DP, d<=8, h<=4), max rel error %.2e, %.2fs", n,
              worst, secs)};
}

// ------------------------------------------------------------------ metrics

Verdict metric_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  double worst_ndcg = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 2 + rng() % 80;
    std::vector<double> scores(n);
    for (auto& x : scores) x = static_cast<double>(rng() % 9) + (rng() % 2 ? 0.5 : 0.0);
    std::set<std::uint32_t> ex, test;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto r = rng() % 10;
      if (r < 2) ex.insert(i);
      else if (r < 4) test.insert(i);
    }
    if (ex.size() == n) ex.erase(ex.begin());
    if (test.empty()) test.insert(static_cast<std::uint32_t>(rng() % n));
    const std::vector<std::uint32_t> exv(ex.begin(), ex.end()), tv(test.begin(), test.end());
    for (std::size_t k : {10u, 20u}) {
      const auto want = oracle::brute_metrics(scores, ex, test, k);
      const auto top = rank_items(scores, exv, k);
      mismatches += top != want.top;
      mismatches += recall_at_k(top, tv) != want.recall;
      const double gap = std::abs(ndcg_at_k(top, tv, k) - want.ndcg);
      worst_ndcg = std::max(worst_ndcg, gap);
      mismatches += gap > 1e-9;
    }
  }
  // Worked values, from the formula.
  const double one = 1.0 / std::log2(3.0);
  const double two = (1.0 + 0.5) / (1.0 + 1.0 / std::log2(3.0));
  const std::vector<std::uint32_t> r1 = {7, 3}, t1 = {3}, r2 = {3, 7, 5}, t2 = {3, 5};
  const bool worked = std::abs(ndcg_at_k(r1, t1, 10) - one) < 1e-12 &&
                      std::abs(one - 0.6309) < 1e-4 &&
                      std::abs(ndcg_at_k(r2, t2, 10) - two) < 1e-12;
  const double secs = since(t0);
  return {mismatches == 0 && worked && secs < 5.0,
          fmt("200 random instances x K in {10,20}, %d mismatches, max NDCG gap %.1e; worked "
              "values %.4f and %.4f (the quoted 0.9203 does not match its own formula "
              "(1+1/2)/(1+1/log2 3) = %.5f); %.2fs",
              mismatches, worst_ndcg, ndcg_at_k(r1, t1, 10), ndcg_at_k(r2, t2, 10), two, secs)};
}

// ---------------------------------------------------------------- attention

Verdict attention_suite() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  int violations = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t d = 1 + rng() % 32;
    const double scale = 0.01 + 20.0 * static_cast<double>(rng() % 1000) / 1000.0;
    std::vector<double> rs(d), rl(d), w(d), zero(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      rs[k] = g(rng);
      rl[k] = g(rng);
      w[k] = scale * g(rng);
    }
    const auto o = attention_forward(rs, rl, w);
    violations += std::abs(o.alpha_short + o.alpha_long - 1.0) > 1e-12;
    violations += !(o.alpha_short >= 0.0 && o.alpha_short <= 1.0);
    for (std::size_t k = 0; k < d; ++k) {
      violations += o.e_u[k] < std::min(rs[k], rl[k]) - 1e-12 ||
                    o.e_u[k] > std::max(rs[k], rl[k]) + 1e-12;
    }
    const auto z = attention_forward(rs, rl, zero);
    violations += z.alpha_short != 0.5 || z.alpha_long != 0.5;
    const double shift = 1000.0 * g(rng);
    const auto s = attention_forward(rs, rl, w, shift);
    violations += std::abs(s.alpha_short - o.alpha_short) > 1e-12;
  }
  return {violations == 0, fmt("1000 random cases, %d violations", violations)};
}

// ------------------------------------------------------------------ leakage

Verdict leakage_suite() {
  SynthConfig c;
  c.n_users = 1000;
  c.n_items = 400;
  c.n_topics = 8;
  c.drift_prob = 0.5;
  const auto data = generate(c);
  const auto split = temporal_split(data.interactions, c.ratios, c.min_interactions);
  const auto ix = index_split(split);
  int order = 0, contamination = 0;
  std::size_t negatives = 0;
  for (const auto& u : split.users) {
    auto max_ts = [](const std::vector<Interaction>& v) {
      std::int64_t m = INT64_MIN;
      for (const auto& x : v) m = std::max(m, x.timestamp);
      return m;
    };
    auto min_ts = [](const std::vector<Interaction>& v) {
      std::int64_t m = INT64_MAX;
      for (const auto& x : v) m = std::min(m, x.timestamp);
      return m;
    };
    if (!u.validation.empty()) order += max_ts(u.train) > min_ts(u.validation);
    if (!u.test.empty()) {
      order += max_ts(u.train) > min_ts(u.test);
      if (!u.validation.empty()) order += max_ts(u.validation) > min_ts(u.test);
    }
  }
  // Every item each user touched in any split.
  std::vector<std::set<std::uint32_t>> touched(ix.n_users());
  for (std::size_t u = 0; u < ix.n_users(); ++u) {
    for (const auto* part : {&ix.train[u], &ix.validation[u], &ix.test[u]}) {
      touched[u].insert(part->begin(), part->end());
    }
  }
  for (std::uint64_t epoch = 1; epoch <= 3; ++epoch) {
    for (const auto& e : build_epoch_examples(ix, 4, 42, epoch)) {
      if (e.label) continue;
      ++negatives;
      contamination += touched[e.user].count(e.item) > 0;
    }
  }
  for (std::size_t u = 0; u < split.users.size(); u += 10) {
    const auto& us = split.users[u];
    std::set<std::string> seen;
    for (const auto* part : {&us.train, &us.validation, &us.test}) {
      for (const auto& x : *part) seen.insert(x.item_id);
    }
    for (const auto& ex : sample_negatives(split, us.user_id, 4, 7)) {
      if (ex.label) continue;
      ++negatives;
      contamination += seen.count(ex.item_id) > 0;
    }
  }
  return {order == 0 && contamination == 0 && split.users.size() == 1000,
          fmt("%zu users, %d ordering violations, %d contaminated of %zu sampled negatives",
              split.users.size(), order, contamination, negatives)};
}

// -------------------------------------------------------- synthetic results

SynthConfig drift_config(double drift_prob) {
  SynthConfig sc;
  sc.n_users = 500;
  sc.n_items = 300;
  sc.n_topics = 5;
  sc.drift_prob = drift_prob;
  sc.interactions_mean = 12;
  sc.interactions_std = 2;
  sc.n_flavors = 3;
  sc.recent_flavor_purity = 0.0;
  return sc;
}

ExperimentSettings acceptance_settings(std::uint64_t seed) {
  ExperimentSettings s;
  s.h = 32;
  s.train.batch_size = 256;
  s.train.learning_rate = 2e-3;
  s.train.patience = 15;
  s.train.dropout_rate = 0.2;
  s.train.max_epochs = 100;
  s.train.rng_seed = seed;
  return s;
}

ExperimentData synth_experiment(double drift_prob, std::uint64_t seed) {
  auto sc = drift_config(drift_prob);
  sc.rng_seed = seed;
  const auto data = generate(sc);
  const auto kept = filter_items(data.items);
  const auto split = temporal_split(restrict_to_items(data.interactions, kept));
  TemplateBackend backend;
  const auto profiles = generate_profiles(split, index_items(kept), PromptSet{}, backend, nullptr);
  HashEncoder enc(64);
  return prepare_experiment(split, kept, profiles, enc);
}

struct SeedRun {
  std::map<std::string, double> r10, r20;
  std::vector<double> llm_users, centric_users;  // per-user recall@10
};

std::vector<SeedRun> g_drift_runs;

const std::uint64_t kSeeds[] = {1, 2, 3};

double mean_over(const std::vector<SeedRun>& runs, const std::map<std::string, double> SeedRun::*f,
                 const std::string& key) {
  double s = 0;
  for (const auto& r : runs) s += (r.*f).at(key);
  return s / static_cast<double>(runs.size());
}

std::vector<SeedRun> run_methods(double drift_prob, bool with_popularity) {
  std::vector<SeedRun> out;
  for (auto seed : kSeeds) {
    const auto ex = synth_experiment(drift_prob, seed);
    const auto s = acceptance_settings(seed);
    SeedRun run;
    std::vector<Method> methods = {Method::kCentric, Method::kLlmTp};
    if (with_popularity) methods.push_back(Method::kPopularity);
    for (auto m : methods) {
      const auto rep = evaluate_trained(train_method(m, ex, s), ex);
      run.r10[rep.method] = rep.aggregate.at("recall@10");
      run.r20[rep.method] = rep.aggregate.at("recall@20");
      if (m == Method::kLlmTp) run.llm_users = rep.metric_values("recall@10");
      if (m == Method::kCentric) run.centric_users = rep.metric_values("recall@10");
    }
    out.push_back(std::move(run));
  }
  return out;
}

Verdict method_ordering() {
  const auto t0 = Clock::now();
  g_drift_runs = run_methods(0.8, true);
  const double secs_methods = since(t0);
  std::vector<double> a, b;
  std::string per_seed;
  for (std::size_t k = 0; k < g_drift_runs.size(); ++k) {
    const auto& r = g_drift_runs[k];
    a.insert(a.end(), r.llm_users.begin(), r.llm_users.end());
    b.insert(b.end(), r.centric_users.begin(), r.centric_users.end());
    per_seed += fmt(" seed %llu: %.3f/%.3f/%.3f;", static_cast<unsigned long long>(kSeeds[k]),
                    r.r10.at("llm_tp"), r.r10.at("centric"), r.r10.at("popularity"));
  }
  const double llm = mean_over(g_drift_runs, &SeedRun::r10, "llm_tp");
  const double cen = mean_over(g_drift_runs, &SeedRun::r10, "centric");
  const double pop = mean_over(g_drift_runs, &SeedRun::r10, "popularity");
  const auto t = paired_t_test(a, b);
  return {llm > cen && llm > pop && t.p_value < 0.05 && secs_methods < 300.0,
          fmt("mean Recall@10 LLM-TP %.4f, Centric %.4f, Popularity %.4f (+%.1f%% vs Centric); "
              "paired t-test over %zu user-seed pairs t=%.2f p=%.2g; per seed "
              "(LLM-TP/Centric/Pop):%s %.0fs",
              llm, cen, pop, 100.0 * (llm - cen) / cen, a.size(), t.t, t.p_value,
              per_seed.c_str(), secs_methods)};
}

Verdict ablation_ordering() {
  const auto t0 = Clock::now();
  // Same per-seed data as the method run; the full variant retrains LLM-TP.
  std::vector<SeedRun> runs;
  for (auto seed : kSeeds) {
    const auto ex = synth_experiment(0.8, seed);
    const auto s = acceptance_settings(seed);
    SeedRun run;
    for (auto v : {ScoringVariant::kFull, ScoringVariant::kShortOnly, ScoringVariant::kLongOnly,
                   ScoringVariant::kGeneralOnly, ScoringVariant::kDotProduct}) {
      const auto rep = evaluate_trained(train_variant(v, ex, s), ex);
      run.r20[std::string(to_string(v))] = rep.aggregate.at("recall@20");
    }
    runs.push_back(std::move(run));
  }
  const double full = mean_over(runs, &SeedRun::r20, "full");
  bool all_below = true;
  std::string parts;
  std::string worst;
  double worst_v = 2.0;
  for (const char* v : {"short_only", "long_only", "general_only", "dot_product"}) {
    const double m = mean_over(runs, &SeedRun::r20, v);
    all_below = all_below && full > m;
    parts += fmt(" %s %.4f;", v, m);
    if (m < worst_v) {
      worst_v = m;
      worst = v;
    }
  }
  return {all_below, fmt("mean Recall@20 full %.4f vs%s worst learned variant: %s%s; %.0fs", full,
                         parts.c_str(), worst.c_str(),
                         worst == "dot_product" ? " (DP worst, as reported)"
                                                : " (DP not worst; reported only)",
                         since(t0))};
}

Verdict stability() {
  const auto stable = run_methods(0.0, false);
  const double gap_drift = mean_over(g_drift_runs, &SeedRun::r10, "llm_tp") -
                           mean_over(g_drift_runs, &SeedRun::r10, "centric");
  const double gap_stable = mean_over(stable, &SeedRun::r10, "llm_tp") -
                            mean_over(stable, &SeedRun::r10, "centric");
  const double ratio = gap_drift > 0 ? gap_stable / gap_drift : INFINITY;
  return {ratio < 0.5,
          fmt("Recall@10 gap LLM-TP minus Centric: drift 0.8 %.4f, drift 0 %.4f, ratio %.3f "
              "(seeds 1,2,3)",
              gap_drift, gap_stable, ratio)};
}

// -------------------------------------------------------------- determinism

const char* kPipelineConfig = R"({
  "synth": {"n_users": 120, "n_items": 200, "n_topics": 5, "drift_prob": 0.8},
  "encoder": {"d": 32},
  "model": {"h": 16},
  "train": {"max_epochs": 4, "batch_size": 256},
  "mf": {"k": 8},
  "seeds": [5]
})";

std::map<std::string, std::string> pipeline_outputs(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const char* sub : {"manifests", "checkpoints", "reports"}) {
    for (const auto& e : fs::directory_iterator(work / sub)) {
      const auto name = e.path().filename().string();
      if (name.ends_with(".timings.json")) continue;
      out[std::string(sub) + "/" + name] = testing::read_file(e.path());
    }
  }
  return out;
}

Verdict determinism() {
  testing::TempDir a, b;
  std::map<std::string, std::string> outs[2];
  int k = 0;
  for (auto* dir : {&a, &b}) {
    auto doc = nlohmann::json::parse(kPipelineConfig);
    doc["work_dir"] = (dir->path() / "work").string();
    const auto cfg = config_from_json(doc, dir->path());
    std::ostringstream log;
    for (auto s : {Stage::kSynth, Stage::kIngest, Stage::kProfile, Stage::kEncode, Stage::kTrain,
                   Stage::kEvaluate, Stage::kAblate, Stage::kReport}) {
      run_stage(s, cfg, log);
    }
    outs[k++] = pipeline_outputs(dir->path() / "work");
  }
  std::size_t same = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : outs[0]) {
    auto it = outs[1].find(name);
    if (it != outs[1].end() && it->second == bytes) {
      ++same;
    } else if (first_diff.empty()) {
      first_diff = name;
    }
  }
  const bool ok = same == outs[0].size() && outs[0].size() == outs[1].size() && same > 30;
  return {ok, fmt("%zu of %zu manifests/checkpoints/reports byte-identical across two runs%s%s",
                  same, outs[0].size(), first_diff.empty() ? "" : "; first difference: ",
                  first_diff.c_str())};
}

// ---------------------------------------------------------------- offline

bool loopback_up() {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) return false;
  ifreq ifr{};
  std::strncpy(ifr.ifr_name, "lo", IFNAMSIZ - 1);
  bool ok = ::ioctl(fd, SIOCGIFFLAGS, &ifr) == 0;
  ifr.ifr_flags |= IFF_UP | IFF_RUNNING;
  ok = ok && ::ioctl(fd, SIOCSIFFLAGS, &ifr) == 0;
  ::close(fd);
  return ok;
}

bool outside_unreachable() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(80);
  ::inet_pton(AF_INET, "192.0.2.1", &addr.sin_addr);
  const bool refused = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0;
  ::close(fd);
  return refused;
}

// Runs every unit-test binary and the CLI pipeline in a fresh network
// namespace whose only interface is loopback.
Verdict offline_completeness() {
  std::vector<std::string> binaries;
  std::stringstream list(TEMPOREC_TEST_BINARIES);
  for (std::string b; std::getline(list, b, '|');) {
    if (!b.empty()) binaries.push_back(b);
  }
  testing::TempDir scratch;
  testing::write_file(scratch / "cfg.json", kPipelineConfig);
  const std::string cli = std::string("cd '") + scratch.path().string() + "' && '" TEMPOREC_CLI
                          "' all --config cfg.json > cli.log 2>&1";

  int pipe_fd[2];
  if (::pipe(pipe_fd) != 0) return {false, "pipe failed"};
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::close(pipe_fd[0]);
    std::string msg;
    int code = 0;
    if (::unshare(CLONE_NEWNET) != 0 && ::unshare(CLONE_NEWUSER | CLONE_NEWNET) != 0) {
      msg = std::string("cannot create an isolated network namespace: ") + std::strerror(errno);
      code = 2;
    } else if (!loopback_up()) {
      msg = "cannot bring up loopback in the namespace";
      code = 2;
    } else if (!outside_unreachable()) {
      msg = "outside address reachable inside the namespace";
      code = 2;
    } else {
      int passed = 0;
      std::string failed;
      for (const auto& b : binaries) {
        const std::string cmd = "'" + b + "' > /dev/null 2>&1";
        if (std::system(cmd.c_str()) == 0) {
          ++passed;
        } else {
          failed += " " + fs::path(b).filename().string();
        }
      }
      const bool cli_ok = std::system(cli.c_str()) == 0;
      msg = fmt("%d/%zu test binaries and the full CLI pipeline (%s) ran inside a network "
                "namespace with loopback only%s%s",
                passed, binaries.size(), cli_ok ? "ok" : "FAILED",
                failed.empty() ? "" : "; failing:", failed.c_str());
      code = (passed == static_cast<int>(binaries.size()) && cli_ok) ? 0 : 1;
    }
    (void)!::write(pipe_fd[1], msg.data(), msg.size());
    ::close(pipe_fd[1]);
    std::_Exit(code);
  }
  ::close(pipe_fd[1]);
  std::string msg;
  char buf[512];
  ssize_t n;
  while ((n = ::read(pipe_fd[0], buf, sizeof buf)) > 0) msg.append(buf, static_cast<std::size_t>(n));
  ::close(pipe_fd[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  return {WIFEXITED(status) && WEXITSTATUS(status) == 0, msg};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  report("gradient suite", gradient_suite());
  report("metric oracle suite", metric_suite());
  report("attention invariants", attention_suite());
  report("split leakage suite", leakage_suite());
  report("method ordering on drift data", method_ordering());
  report("ablation ordering on drift data", ablation_ordering());
  report("stability analog", stability(), /*soft=*/true);
  report("determinism", determinism());
  report("offline completeness", offline_completeness());
  std::printf("acceptance finished in %.0fs, %d hard failure(s)\n", since(t0), g_hard_failures);
  return g_hard_failures == 0 ? 0 : 1;
}
