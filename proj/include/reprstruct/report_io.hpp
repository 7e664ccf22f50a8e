#pragma once

#include <chrono>
#include <ctime>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "reprstruct/estimator.hpp"
#include "reprstruct/measures.hpp"

namespace reprstruct {

inline constexpr const char* kVersion = "0.3.0";

struct ReportMeta {
  bool include_time = true;
  std::optional<BinningSpec> spec;  // recorded when given
};

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json to_json(const BinningSpec& spec) {
  nlohmann::ordered_json j;
  j["n_bins"] = spec.n_bins;
  j["lo"] = spec.lo;
  j["hi"] = spec.hi;
  j["degenerate_dims"] = spec.degenerate_dims();
  return j;
}

inline nlohmann::ordered_json to_json(const SetReport& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["labels"] = s.vocab_size;
  if (!s.ok()) {
    j["error"] = *s.error;
    j["error_code"] = std::string(error_slug(s.error_code.value_or(ErrorCode::invalid_data)));
    return j;
  }
  j["variation"] = s.variation;
  j["regularity"] = s.regularity;
  j["disentanglement"] = s.disentanglement ? nlohmann::ordered_json(*s.disentanglement) : nlohmann::ordered_json(nullptr);
  if (s.disentanglement_error) j["disentanglement_error"] = *s.disentanglement_error;
  if (s.regularity_vs_baseline) j["regularity_vs_baseline"] = *s.regularity_vs_baseline;
  j["per_label"] = nlohmann::ordered_json::array();
  for (const auto& l : s.per_label) {
    nlohmann::ordered_json lj;
    lj["label"] = l.label;
    lj["count"] = l.count;
    lj["variation"] = l.variation;
    lj["regularity"] = l.regularity;
    lj["disentanglement"] = l.disentanglement ? nlohmann::ordered_json(*l.disentanglement) : nlohmann::ordered_json(nullptr);
    j["per_label"].push_back(std::move(lj));
  }
  j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& e : s.excluded) j["excluded"].push_back({{"label", e.label}, {"count", e.count}});
  return j;
}

inline nlohmann::ordered_json to_json(const MeasureReport& report, const ReportMeta& meta = {}) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json m;
  m["tool"] = "reprstruct";
  m["version"] = kVersion;
  m["n_bins"] = report.n_bins;
  m["estimator"] = report.corrected ? "miller-madow" : "mle";
  m["min_count"] = report.min_count;
  m["aggregation"] = report.weighted ? "frequency-weighted" : "unweighted";
  if (report.regularity_baseline) m["regularity_baseline"] = *report.regularity_baseline;
  m["rows"] = report.rows;
  m["dims"] = report.dims;
  if (meta.spec) m["binning"] = to_json(*meta.spec);
  if (meta.include_time) m["generated_at"] = utc_timestamp();
  j["meta"] = std::move(m);
  j["information"] = report.information;
  j["sets"] = nlohmann::ordered_json::array();
  for (const auto& s : report.sets) j["sets"].push_back(to_json(s));
  return j;
}

}  // namespace reprstruct
