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

#include "temporec/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

namespace temporec {
namespace {

const std::map<std::string, std::string, std::less<>>& names() {
  static const std::map<std::string, std::string, std::less<>> n = {
      {"popularity", "Popularity"},
      {"mf", "MF"},
      {"centric", "Centric"},
      {"temp_fusion", "Temp-Fusion"},
      {"llm_tp", "LLM-TP"},
      {"variant_full", "Full Model (LLM-TP)"},
      {"variant_short_only", "Short-Term Only (ST)"},
      {"variant_long_only", "Long-Term Only (LT)"},
      {"variant_general_only", "General Preferences (No TS)"},
      {"variant_dot_product", "Dot-Product Scoring (DP)"},
  };
  return n;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string percent(double g) {
  if (std::isnan(g)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", g);
  return buf;
}

bool significant(const EvalReport& r, const std::string& metric, std::string_view baseline) {
  return std::any_of(r.significance.begin(), r.significance.end(), [&](const auto& s) {
    return s.metric == metric && s.baseline_method == baseline && s.significant;
  });
}

const EvalReport* find(std::span<const EvalReport> reports, std::string_view method) {
  for (const auto& r : reports) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

double aggregate(const EvalReport& r, const std::string& metric) {
  auto it = r.aggregate.find(metric);
  return it == r.aggregate.end() ? std::nan("") : it->second;
}

using Grid = std::vector<std::vector<std::string>>;

Grid method_grid(std::span<const EvalReport> reports, std::string_view baseline,
                 std::string_view subject, bool marks) {
  Grid g;
  std::vector<std::string> header = {"Method"};
  for (const auto& m : metric_names()) header.push_back(m);
  g.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {display_name(r.method)};
    for (const auto& m : metric_names()) {
      std::string cell = fixed4(aggregate(r, m));
      if (marks && significant(r, m, baseline)) cell += "*";
      row.push_back(cell);
    }
    g.push_back(row);
  }
  const auto* s = find(reports, subject);
  const auto* b = find(reports, baseline);
  if (s && b && s != b) {
    std::vector<std::string> row = {"Gain of " + display_name(subject) + " vs. " +
                                    display_name(baseline)};
    for (const auto& m : metric_names()) {
      row.push_back(percent(gain_percent(aggregate(*s, m), aggregate(*b, m))));
    }
    g.push_back(row);
  }
  return g;
}

Grid ablation_grid(std::span<const EvalReport> reports) {
  Grid g;
  std::vector<std::string> header = {"Variant"};
  for (const auto& m : metric_names()) header.push_back(m);
  g.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {display_name(r.method)};
    for (const auto& m : metric_names()) row.push_back(fixed4(aggregate(r, m)));
    g.push_back(row);
  }
  return g;
}

std::string render_text(const Grid& g) {
  std::vector<std::size_t> width;
  for (const auto& row : g) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < g.size(); ++r) {
    for (std::size_t c = 0; c < g[r].size(); ++c) {
      const auto& cell = g[r][c];
      if (c == 0) {
        out << cell << std::string(width[c] - cell.size(), ' ');
      } else {
        out << "  " << std::string(width[c] - cell.size(), ' ') << cell;
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string render_csv(const Grid& g) {
  std::ostringstream out;
  for (const auto& row : g) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_cell(row[c]);
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string display_name(std::string_view method) {
  auto it = names().find(method);
  return it == names().end() ? std::string(method) : it->second;
}

double gain_percent(double value, double reference) {
  if (reference == 0.0) return std::nan("");
  return 100.0 * (value - reference) / reference;
}

std::string render_method_table(std::span<const EvalReport> reports, std::string_view baseline,
                                std::string_view subject) {
  return render_text(method_grid(reports, baseline, subject, true)) +
         "* p < 0.05 vs. " + display_name(baseline) + " (paired t-test over users)\n";
}

std::string render_method_csv(std::span<const EvalReport> reports, std::string_view baseline,
                              std::string_view subject) {
  return render_csv(method_grid(reports, baseline, subject, true));
}

std::string render_ablation_table(std::span<const EvalReport> reports) {
  return render_text(ablation_grid(reports));
}

std::string render_ablation_csv(std::span<const EvalReport> reports) {
  return render_csv(ablation_grid(reports));
}

}  // namespace temporec
