#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "reprstruct/error.hpp"
#include "reprstruct/estimator.hpp"
#include "reprstruct/ingestion.hpp"
#include "reprstruct/labelsets.hpp"
#include "reprstruct/measures.hpp"

namespace reprstruct {

struct CorrelationResult {
  std::size_t n = 0;
  double rho = 0.0;
  double p_two_sided = 1.0;
  std::string method = "spearman; two-sided p from t approximation, df=n-2";
};

/// Ranks starting at 1; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && xs[idx[j]] == xs[idx[i]]) ++j;
    double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = rank;
    i = j;
  }
  return ranks;
}

/// Two-sided p-value of a correlation coefficient via t = r*sqrt((n-2)/(1-r^2)).
inline double correlation_p_value(double rho, std::size_t n) {
  if (std::abs(rho) >= 1.0) return 0.0;
  double df = static_cast<double>(n - 2);
  double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

inline CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    fail(ErrorCode::invalid_parameter,
         "series lengths differ: " + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()));
  }
  if (xs.size() < 3) fail(ErrorCode::invalid_parameter, "spearman needs n >= 3, got " + std::to_string(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isnan(xs[i]) || std::isnan(ys[i])) fail(ErrorCode::invalid_data, "NaN in correlation input");
  }
  auto rx = average_ranks(xs);
  auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorCode::undefined_correlation, "undefined correlation: zero variance in " +
                                               std::string(sxx == 0.0 ? "x" : "y"));
  }
  CorrelationResult r;
  r.n = xs.size();
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  r.p_two_sided = correlation_p_value(r.rho, r.n);
  return r;
}

inline CorrelationResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  return spearman(std::span<const double>(xs), std::span<const double>(ys));
}

// ---------------------------------------------------------------------------
// Measure series

struct SeriesPoint {
  std::int64_t step = 0;
  double loss = 0.0;
  std::optional<double> gen_acc;
  std::vector<std::optional<double>> values;  // aligned with MeasureSeries::keys
};

struct MeasureSeries {
  std::string run_id;
  std::vector<std::string> keys;
  std::vector<SeriesPoint> points;

  std::optional<std::size_t> key_index(const std::string& key) const {
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) return std::nullopt;
    return static_cast<std::size_t>(it - keys.begin());
  }

  const SeriesPoint* at_step(std::int64_t step) const {
    for (const auto& p : points) {
      if (p.step == step) return &p;
    }
    return nullptr;
  }

  /// Value of `key` at a point; key may be a measure key, "loss", "gen_acc" or "step".
  std::optional<double> value(const SeriesPoint& p, const std::string& key) const {
    if (key == "loss") return p.loss;
    if (key == "gen_acc") return p.gen_acc;
    if (key == "step") return static_cast<double>(p.step);
    auto i = key_index(key);
    if (!i) fail(ErrorCode::invalid_parameter, "series '" + run_id + "' has no column '" + key + "'");
    return p.values[*i];
  }
};

inline std::vector<std::string> series_keys(const std::vector<std::string>& set_names, bool with_baseline) {
  std::vector<std::string> keys{"information"};
  for (const auto& s : set_names) {
    keys.push_back(s + ".variation");
    keys.push_back(s + ".regularity");
    keys.push_back(s + ".disentanglement");
    if (with_baseline) keys.push_back(s + ".regularity_vs_baseline");
  }
  return keys;
}

inline std::vector<std::optional<double>> flatten_report(const MeasureReport& report,
                                                         const std::vector<std::string>& set_names,
                                                         bool with_baseline) {
  std::vector<std::optional<double>> out{report.information};
  for (const auto& name : set_names) {
    const SetReport* s = report.find(name);
    bool ok = s && s->ok();
    out.push_back(ok ? std::optional<double>(s->variation) : std::nullopt);
    out.push_back(ok ? std::optional<double>(s->regularity) : std::nullopt);
    out.push_back(ok ? s->disentanglement : std::nullopt);
    if (with_baseline) out.push_back(ok ? s->regularity_vs_baseline : std::nullopt);
  }
  return out;
}

struct SeriesOptions {
  std::vector<std::string> sets{"token"};
  std::size_t n_bins = kDefaultBins;
  MeasureOptions measure;
  bool strict = false;
};

struct SeriesResult {
  MeasureSeries series;
  std::vector<BinningSpec> specs;  // per included checkpoint, refit on that checkpoint
  std::vector<std::string> warnings;
};

/// One report per checkpoint, bins refit on each checkpoint's batch. In
/// lenient mode a failing checkpoint is skipped with a warning.
inline SeriesResult compute_series(const RunManifest& manifest, const SeriesOptions& options) {
  check_bin_count(options.n_bins);
  SeriesResult result;
  result.series.run_id = manifest.run_id;
  const bool with_baseline = options.measure.regularity_baseline.has_value();
  result.series.keys = series_keys(options.sets, with_baseline);

  auto records = load_manifest_records(manifest);
  std::vector<LabelSet> sets;
  for (const auto& name : options.sets) sets.push_back(build_label_set(records, name));

  for (const auto& cp : manifest.checkpoints) {
    try {
      auto batch = read_reps(cp.reps_path);
      validate_alignment(batch, records);
      auto spec = fit_bins(batch, options.n_bins);
      auto report = analyze(batch, spec, sets, options.measure);
      SeriesPoint point;
      point.step = cp.step;
      point.loss = cp.loss;
      point.gen_acc = cp.gen_acc;
      point.values = flatten_report(report, options.sets, with_baseline);
      for (const auto& s : report.sets) {
        if (!s.ok()) {
          std::string msg = "step " + std::to_string(cp.step) + ": set '" + s.name + "': " + *s.error;
          if (options.strict) fail(s.error_code.value_or(ErrorCode::invalid_data), msg);
          result.warnings.push_back(msg);
        }
      }
      result.series.points.push_back(std::move(point));
      result.specs.push_back(std::move(spec));
    } catch (const Error& e) {
      if (options.strict) throw;
      result.warnings.push_back("step " + std::to_string(cp.step) + " skipped: " + e.what());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Cross-run statistics

namespace detail {

inline std::vector<double> series_column(const MeasureSeries& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& p : s.points) {
    auto v = s.value(p, key);
    if (!v) fail(ErrorCode::invalid_data, "series '" + s.run_id + "' has no '" + key + "' value at step " + std::to_string(p.step));
    out.push_back(*v);
  }
  return out;
}

/// (value, run) pairs of `key` at `step`; runs lacking the step or value are listed.
inline std::vector<double> values_at_step(const std::vector<MeasureSeries>& runs, const std::string& key,
                                          std::int64_t step, std::vector<std::string>& missing) {
  std::vector<double> out;
  for (const auto& s : runs) {
    const SeriesPoint* p = s.at_step(step);
    std::optional<double> v = p ? s.value(*p, key) : std::nullopt;
    if (!v) {
      missing.push_back(s.run_id);
      continue;
    }
    out.push_back(*v);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& xs, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

}  // namespace detail

/// Spearman correlation between two columns of one run, across its steps.
inline CorrelationResult correlate_within_run(const MeasureSeries& series, const std::string& x, const std::string& y) {
  return spearman(detail::series_column(series, x), detail::series_column(series, y));
}

/// Spearman correlation across runs of a measure against a per-run target
/// ("loss" or "gen_acc"), one pair per run, at a single step.
inline CorrelationResult correlate_across_runs(const std::vector<MeasureSeries>& runs, const std::string& key,
                                               const std::string& target, std::int64_t step) {
  std::vector<double> xs, ys;
  std::vector<std::string> missing;
  for (const auto& s : runs) {
    const SeriesPoint* p = s.at_step(step);
    std::optional<double> v = p ? s.value(*p, key) : std::nullopt;
    std::optional<double> t = p ? s.value(*p, target) : std::nullopt;
    if (!v || !t) {
      missing.push_back(s.run_id);
      continue;
    }
    xs.push_back(*v);
    ys.push_back(*t);
  }
  if (xs.size() < 3) {
    fail(ErrorCode::insufficient_runs, "need >= 3 runs with '" + key + "' and '" + target + "' at step " +
                                           std::to_string(step) + ", have " + std::to_string(xs.size()) +
                                           (missing.empty() ? "" : "; missing: " + detail::join(missing, ",")));
  }
  return spearman(xs, ys);
}

struct AggregateResult {
  std::string key;
  std::int64_t step = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double ci95_half_width = 0.0;
};

/// Mean and 95% CI half-width t(0.975, n-1) * s / sqrt(n) of raw values.
inline AggregateResult aggregate_values(const std::vector<double>& values) {
  if (values.size() < 2) fail(ErrorCode::insufficient_runs, "aggregation needs >= 2 values, got " + std::to_string(values.size()));
  AggregateResult r;
  r.n = values.size();
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  bool all_equal = std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); });
  if (all_equal) {
    r.mean = values.front();
    return r;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  double sd = std::sqrt(ss / (n - 1.0));
  boost::math::students_t dist(n - 1.0);
  r.ci95_half_width = boost::math::quantile(dist, 0.975) * sd / std::sqrt(n);
  return r;
}

inline AggregateResult aggregate_runs(const std::vector<MeasureSeries>& runs, const std::string& key, std::int64_t step) {
  std::vector<std::string> missing;
  auto values = detail::values_at_step(runs, key, step, missing);
  if (values.size() < 2) {
    fail(ErrorCode::insufficient_runs, "need >= 2 runs with '" + key + "' at step " + std::to_string(step) +
                                           ", have " + std::to_string(values.size()) +
                                           (missing.empty() ? "" : "; missing: " + detail::join(missing, ",")));
  }
  auto r = aggregate_values(values);
  r.key = key;
  r.step = step;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string series_to_csv(const MeasureSeries& s) {
  if (s.run_id.find_first_of(",\n\"") != std::string::npos) {
    fail(ErrorCode::invalid_data, "run_id '" + s.run_id + "' cannot be written to CSV");
  }
  std::string out = "run_id,step,loss,gen_acc";
  for (const auto& k : s.keys) out += "," + k;
  out += "\n";
  for (const auto& p : s.points) {
    out += s.run_id + "," + std::to_string(p.step) + "," + format_double(p.loss) + ",";
    if (p.gen_acc) out += format_double(*p.gen_acc);
    for (const auto& v : p.values) {
      out += ",";
      if (v) out += format_double(*v);
    }
    out += "\n";
  }
  return out;
}

inline void write_series_csv(const MeasureSeries& s, const fs::path& path) {
  detail::write_file_bytes(path, series_to_csv(s));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::optional<double> parse_optional_double(const std::string& field, const std::string& where) {
  if (field.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    fail(ErrorCode::format_error, where + ": bad number '" + field + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a series CSV. A file holding several run_ids yields one series each,
/// in order of first appearance.
inline std::vector<MeasureSeries> parse_series_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::format_error, name + ": empty series file");
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "run_id" || header[1] != "step" || header[2] != "loss" || header[3] != "gen_acc") {
    fail(ErrorCode::format_error, name + ": header must start with run_id,step,loss,gen_acc");
  }
  std::vector<std::string> keys(header.begin() + 4, header.end());
  std::vector<MeasureSeries> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = name + ":" + std::to_string(lineno);
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::format_error, where + ": " + std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    auto it = std::find_if(runs.begin(), runs.end(), [&](const MeasureSeries& s) { return s.run_id == fields[0]; });
    if (it == runs.end()) {
      runs.push_back(MeasureSeries{fields[0], keys, {}});
      it = runs.end() - 1;
    }
    SeriesPoint p;
    auto step = detail::parse_optional_double(fields[1], where);
    auto loss = detail::parse_optional_double(fields[2], where);
    if (!step || !loss) fail(ErrorCode::format_error, where + ": step and loss are required");
    p.step = static_cast<std::int64_t>(*step);
    p.loss = *loss;
    p.gen_acc = detail::parse_optional_double(fields[3], where);
    for (std::size_t i = 4; i < fields.size(); ++i) p.values.push_back(detail::parse_optional_double(fields[i], where));
    if (!it->points.empty() && p.step <= it->points.back().step) {
      fail(ErrorCode::format_error, where + ": steps must be strictly increasing within run '" + it->run_id + "'");
    }
    it->points.push_back(std::move(p));
  }
  return runs;
}

inline std::vector<MeasureSeries> read_series_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  return parse_series_csv(in, path.string());
}

inline nlohmann::ordered_json to_json(const CorrelationResult& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["rho"] = r.rho;
  j["p_two_sided"] = r.p_two_sided;
  j["method"] = r.method;
  return j;
}

inline nlohmann::ordered_json to_json(const AggregateResult& r) {
  nlohmann::ordered_json j;
  j["key"] = r.key;
  j["step"] = r.step;
  j["n"] = r.n;
  j["mean"] = r.mean;
  j["ci95_half_width"] = r.ci95_half_width;
  return j;
}

}  // namespace reprstruct
