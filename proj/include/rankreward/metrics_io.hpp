/*
 * Copyright 2026 The rankreward Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "rankreward/errors.hpp"

namespace rankreward {

// Kendall tau-b between two return assignments over the same trajectories.
// Pairs tied in either assignment add nothing to the numerator; the tie
// correction in the denominator keeps tac(a, a) = 1 when ties are present.
// Returns 0 when either assignment is constant.
inline double tac(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError("tac: return lists differ in length");
  if (a.size() < 2) throw ArgumentError("tac: need at least two trajectories");
  long long concordant = 0;
  long long discordant = 0;
  long long tied_a = 0;
  long long tied_b = 0;
  long long pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++pairs;
      const double da = a[j] - a[i];
      const double db = b[j] - b[i];
      if (da == 0.0) ++tied_a;
      if (db == 0.0) ++tied_b;
      if (da == 0.0 || db == 0.0) continue;
      if ((da > 0.0) == (db > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double denom =
      std::sqrt(static_cast<double>(pairs - tied_a)) * std::sqrt(static_cast<double>(pairs - tied_b));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / denom;
}

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t env_steps = 0;
  double ground_truth_return = 0.0;
  std::size_t budget_used = 0;
  std::size_t ensemble_version = 0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct RunLog {
  std::vector<EpisodeRecord> episodes;

  std::vector<double> returns() const {
    std::vector<double> r;
    r.reserve(episodes.size());
    for (const auto& e : episodes) r.push_back(e.ground_truth_return);
    return r;
  }

  void validate() const {
    for (std::size_t i = 1; i < episodes.size(); ++i) {
      if (episodes[i].episode <= episodes[i - 1].episode) throw ArgumentError("run log: episodes must increase");
      if (episodes[i].env_steps < episodes[i - 1].env_steps) throw ArgumentError("run log: env_steps decreased");
    }
  }
};

struct CurveStats {
  std::vector<double> final_mean;  // per seed
  std::vector<double> auc;         // per seed
  double mean_final = 0.0;
  double mean_auc = 0.0;
};

// Trapezoidal area over unit-spaced episodes.
inline double trapezoid_auc(const std::vector<double>& r) {
  double a = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) a += 0.5 * (r[i - 1] + r[i]);
  return a;
}

inline double tail_mean(const std::vector<double>& r, std::size_t window) {
  if (window == 0 || window > r.size()) throw ArgumentError("window exceeds the log length");
  double s = 0.0;
  for (std::size_t i = r.size() - window; i < r.size(); ++i) s += r[i];
  return s / static_cast<double>(window);
}

inline CurveStats learning_curve_stats(const std::vector<RunLog>& logs, std::size_t window) {
  if (logs.empty()) throw ArgumentError("learning_curve_stats: no logs");
  for (const RunLog& l : logs) {
    if (l.episodes.size() != logs.front().episodes.size()) {
      throw ArgumentError("learning_curve_stats: logs do not share an episode axis");
    }
    for (std::size_t i = 0; i < l.episodes.size(); ++i) {
      if (l.episodes[i].episode != logs.front().episodes[i].episode) {
        throw ArgumentError("learning_curve_stats: logs do not share an episode axis");
      }
    }
  }
  CurveStats s;
  for (const RunLog& l : logs) {
    const std::vector<double> r = l.returns();
    s.final_mean.push_back(tail_mean(r, window));
    s.auc.push_back(trapezoid_auc(r));
  }
  const double m = static_cast<double>(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    s.mean_final += s.final_mean[i] / m;
    s.mean_auc += s.auc[i] / m;
  }
  return s;
}

// Truncates every log to the shortest one so that stats share an axis.
inline std::vector<RunLog> common_prefix(std::vector<RunLog> logs) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const RunLog& l : logs) n = std::min(n, l.episodes.size());
  for (RunLog& l : logs) l.episodes.resize(n);
  return logs;
}

// -- CSV -----------------------------------------------------------------

inline constexpr const char* kCsvHeader = "episode,env_steps,ground_truth_return,budget_used,ensemble_version";

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ArgumentError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ArgumentError("not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string to_csv(const RunLog& log) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const EpisodeRecord& e : log.episodes) {
    out += std::to_string(e.episode);
    out += ',';
    out += std::to_string(e.env_steps);
    out += ',';
    out += format_double(e.ground_truth_return);
    out += ',';
    out += std::to_string(e.budget_used);
    out += ',';
    out += std::to_string(e.ensemble_version);
    out += '\n';
  }
  return out;
}

inline RunLog from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ArgumentError("CSV: unexpected header");
  RunLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 5) throw ArgumentError("CSV: expected 5 fields, got " + std::to_string(f.size()));
    log.episodes.push_back({parse_size(f[0]), parse_size(f[1]), parse_double(f[2]), parse_size(f[3]),
                            parse_size(f[4])});
  }
  return log;
}

inline void export_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << to_csv(log);
  if (!out) throw IoError(path, "write failed");
}

inline RunLog import_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_csv(ss.str());
  } catch (const ArgumentError& e) {
    throw IoError(path, e.what());
  }
}

// -- manifest ------------------------------------------------------------

inline constexpr const char* kManifestSchema = "rankreward.manifest/v1";
inline constexpr const char* kCodeVersion = "0.1.0";

inline nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                                    const nlohmann::json& summary) {
  return {{"schema", kManifestSchema},
          {"command", command},
          {"code_version", kCodeVersion},
          {"config", config},
          {"summary", summary}};
}

inline void export_manifest(const nlohmann::json& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError(path, "write failed");
}

}  // namespace rankreward
