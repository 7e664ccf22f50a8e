#pragma once

// Information, Variation, Regularity and Disentanglement of a representation
// batch with respect to label sets.
//
// All conditional and complement histograms reuse the bin edges fitted on the
// full batch. Information and Variation are efficiencies of the dimension-wise
// entropy (optionally Miller-Madow corrected); Regularity is
// information - variation; Disentanglement is the dimension-averaged
// Jensen-Shannon divergence (bits, MLE probabilities) between a label's rows
// and all remaining rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reprstruct/batch.hpp"
#include "reprstruct/error.hpp"
#include "reprstruct/estimator.hpp"
#include "reprstruct/labelsets.hpp"
#include "reprstruct/parallel.hpp"

namespace reprstruct {

struct MeasureOptions {
  bool corrected = true;
  std::size_t min_count = kDefaultMinCount;
  bool weighted = false;  // frequency-weighted label average instead of unweighted
  std::optional<std::string> regularity_baseline;
  unsigned threads = 0;  // 0: thread_count()
};

struct LabelMeasures {
  std::uint32_t id = 0;
  std::string label;
  std::size_t count = 0;
  double variation = 0.0;
  double regularity = 0.0;
  std::optional<double> disentanglement;
};

struct SetReport {
  std::string name;
  std::size_t vocab_size = 0;
  // Set-level failure (alignment, empty label set); no measures when present.
  std::optional<std::string> error;
  std::optional<ErrorCode> error_code;

  double variation = 0.0;
  double regularity = 0.0;
  std::optional<double> disentanglement;
  std::optional<std::string> disentanglement_error;
  // variation(baseline set) - variation(this set), when a baseline is configured.
  std::optional<double> regularity_vs_baseline;

  std::vector<LabelMeasures> per_label;
  std::vector<ExcludedLabel> excluded;

  bool ok() const noexcept { return !error.has_value(); }
};

struct MeasureReport {
  std::size_t n_bins = 0;
  bool corrected = true;
  std::size_t min_count = kDefaultMinCount;
  bool weighted = false;
  std::optional<std::string> regularity_baseline;
  std::size_t rows = 0;
  std::size_t dims = 0;
  double information = 0.0;
  std::vector<SetReport> sets;

  const SetReport* find(const std::string& name) const {
    for (const auto& s : sets) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

/// Jensen-Shannon divergence in bits between two distributions on the same
/// support: 0.5*sum p log2(2p/(p+q)) + 0.5*sum q log2(2q/(p+q)).
inline double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    fail(ErrorCode::shape_error, "jsd support mismatch: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  }
  auto check = [](std::span<const double> v, const char* which) {
    double s = 0.0;
    for (double x : v) {
      if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_data, std::string("jsd input ") + which + " has invalid entries");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      fail(ErrorCode::invalid_data, std::string("jsd input ") + which + " sums to " + std::to_string(s));
    }
  };
  check(p, "p");
  check(q, "q");
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double m2 = p[i] + q[i];
    if (p[i] > 0.0) sp += p[i] * std::log2((2.0 * p[i]) / m2);
    if (q[i] > 0.0) sq += q[i] * std::log2((2.0 * q[i]) / m2);
  }
  return std::clamp(0.5 * sp + 0.5 * sq, 0.0, 1.0);
}

inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  return jsd(std::span<const double>(p), std::span<const double>(q));
}

/// Shared state for measuring one batch against one binning: the bin-id
/// matrix, the global histogram and the global entropy.
class MeasureEngine {
 public:
  struct LabelStats {
    double variation = 0.0;  // efficiency of H_dw(Y | label)
    double disentanglement = 0.0;
  };

  MeasureEngine(const RepresentationBatch& batch, const BinningSpec& spec, bool corrected, unsigned threads = 0)
      : spec_(spec),
        corrected_(corrected),
        threads_(threads == 0 ? thread_count() : threads),
        bins_(batch, spec),
        global_(batch.dims(), spec.n_bins, batch.rows()) {
    for (std::size_t r = 0; r < bins_.rows(); ++r) {
      auto row = bins_.row(r);
      for (std::size_t d = 0; d < bins_.dims(); ++d) ++global_.counts(d)[row[d]];
    }
    global_entropy_ = dimensionwise_entropy(global_, corrected_);
  }

  const BinningSpec& spec() const noexcept { return spec_; }
  std::size_t rows() const noexcept { return bins_.rows(); }
  std::size_t dims() const noexcept { return bins_.dims(); }
  bool corrected() const noexcept { return corrected_; }
  const HistogramSet& global_histogram() const noexcept { return global_; }
  const EntropyEstimate& global_entropy() const noexcept { return global_entropy_; }
  double information() const noexcept { return global_entropy_.efficiency; }

  void check_aligned(const LabelSet& set) const {
    if (set.rows() != rows()) {
      fail(ErrorCode::alignment_error, "label set '" + set.name + "' has labels=" + std::to_string(set.rows()) +
                                           " rows=" + std::to_string(rows()));
    }
  }

  /// Per-label statistics for `labels` (ids into `set`), in the given order.
  std::vector<LabelStats> label_stats(const LabelSet& set, std::span<const std::uint32_t> labels, bool with_jsd) const {
    check_aligned(set);
    // Counting sort of row ids by label.
    std::vector<std::size_t> offsets(set.size() + 1, 0);
    for (auto id : set.row_labels) ++offsets[id + 1];
    for (std::size_t k = 0; k < set.size(); ++k) offsets[k + 1] += offsets[k];
    std::vector<std::uint32_t> order(rows());
    {
      std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
      for (std::size_t r = 0; r < rows(); ++r) order[cursor[set.row_labels[r]]++] = static_cast<std::uint32_t>(r);
    }

    std::vector<LabelStats> out(labels.size());
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads_, std::max<std::size_t>(1, labels.size())));
    std::size_t chunk = (labels.size() + workers - 1) / std::max(1u, workers);
    parallel_for(
        workers,
        [&](std::size_t w) {
          Scratch scratch(dims() * spec_.n_bins);
          std::size_t begin = w * chunk;
          std::size_t end = std::min(labels.size(), begin + chunk);
          for (std::size_t i = begin; i < end; ++i) {
            auto id = labels[i];
            if (id >= set.size()) fail(ErrorCode::missing_label, "label id " + std::to_string(id) + " not in set");
            std::span<const std::uint32_t> rows(order.data() + offsets[id], offsets[id + 1] - offsets[id]);
            out[i] = one_label(rows, with_jsd, scratch);
          }
        },
        workers);
    return out;
  }

 private:
  struct Scratch {
    explicit Scratch(std::size_t cells) : counts(cells, 0) {}
    std::vector<std::uint32_t> counts;
    std::vector<std::uint32_t> touched;
  };

  LabelStats one_label(std::span<const std::uint32_t> rows, bool with_jsd, Scratch& s) const {
    const std::size_t n_bins = spec_.n_bins;
    const std::size_t dims = this->dims();
    s.touched.clear();
    for (auto r : rows) {
      auto row = bins_.row(r);
      for (std::size_t d = 0; d < dims; ++d) {
        std::size_t cell = d * n_bins + row[d];
        if (s.counts[cell]++ == 0) s.touched.push_back(static_cast<std::uint32_t>(cell));
      }
    }
    if (s.touched.size() * 8 < s.counts.size()) {
      std::sort(s.touched.begin(), s.touched.end());
    } else {
      s.touched.clear();
      for (std::size_t c = 0; c < s.counts.size(); ++c) {
        if (s.counts[c] > 0) s.touched.push_back(static_cast<std::uint32_t>(c));
      }
    }

    const std::uint64_t m1 = rows.size();
    const std::uint64_t m2 = this->rows() - m1;
    const double fm1 = static_cast<double>(m1);
    const double fm2 = static_cast<double>(m2);
    double sum_h = 0.0;
    double sum_jsd = 0.0;

    std::size_t t = 0;
    while (t < s.touched.size()) {
      const std::size_t d = s.touched[t] / n_bins;
      auto global = global_.counts(d);
      double h = 0.0;
      std::size_t occupied = 0;
      double sp = 0.0;
      double sq = 0.0;
      std::uint64_t overlap = 0;
      for (; t < s.touched.size() && s.touched[t] / n_bins == d; ++t) {
        const std::uint32_t cell = s.touched[t];
        const std::uint64_t a = s.counts[cell];
        h -= detail::plogp_bits(a, m1);
        ++occupied;
        if (with_jsd) {
          const std::uint64_t b = global[cell - d * n_bins] - a;
          const double p = static_cast<double>(a) / fm1;
          const double q = m2 > 0 ? static_cast<double>(b) / fm2 : 0.0;
          sp += static_cast<double>(a) * std::log2((2.0 * p) / (p + q));
          if (b > 0) sq += static_cast<double>(b) * std::log2((2.0 * q) / (p + q));
          overlap += b;
        }
        s.counts[cell] = 0;
      }
      if (corrected_) h += miller_madow_term(occupied, m1);
      sum_h += h;
      if (with_jsd) {
        // Complement bins the label never touches contribute b*log2(2) = b.
        const double rest = static_cast<double>(m2 - overlap);
        const double js = 0.5 * (sp / fm1) + 0.5 * ((sq + rest) / fm2);
        sum_jsd += std::clamp(js, 0.0, 1.0);
      }
    }

    LabelStats stats;
    stats.variation = efficiency(sum_h / static_cast<double>(dims), n_bins);
    stats.disentanglement = sum_jsd / static_cast<double>(dims);
    return stats;
  }

  BinningSpec spec_;
  bool corrected_;
  unsigned threads_;
  BinIndexMatrix bins_;
  HistogramSet global_;
  EntropyEstimate global_entropy_;
};

namespace detail {

inline double label_mean(const std::vector<double>& values, const std::vector<std::size_t>& weights, bool weighted) {
  double sum = 0.0;
  if (!weighted) {
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += static_cast<double>(weights[i]) * values[i];
    total += static_cast<double>(weights[i]);
  }
  return sum / total;
}

inline SetReport measure_set(const MeasureEngine& engine, const LabelSet& set, const MeasureOptions& options) {
  SetReport report;
  report.name = set.name;
  report.vocab_size = set.size();
  engine.check_aligned(set);
  LabelFilter filter = filter_min_count(set, options.min_count);
  report.excluded = filter.excluded;

  const bool with_jsd = filter.included.size() >= 2;
  auto stats = engine.label_stats(set, filter.included, with_jsd);
  const double info = engine.information();

  std::vector<double> variations;
  std::vector<double> dis;
  std::vector<std::size_t> weights;
  for (std::size_t i = 0; i < filter.included.size(); ++i) {
    auto id = filter.included[i];
    LabelMeasures lm;
    lm.id = id;
    lm.label = set.vocab[id];
    lm.count = set.counts[id];
    lm.variation = stats[i].variation;
    lm.regularity = info - stats[i].variation;
    if (with_jsd) lm.disentanglement = stats[i].disentanglement;
    report.per_label.push_back(lm);
    variations.push_back(stats[i].variation);
    dis.push_back(stats[i].disentanglement);
    weights.push_back(lm.count);
  }
  report.variation = label_mean(variations, weights, options.weighted);
  report.regularity = info - report.variation;
  if (with_jsd) {
    report.disentanglement = label_mean(dis, weights, options.weighted);
  } else {
    report.disentanglement_error = "disentanglement needs at least 2 labels passing min_count, set '" + set.name +
                                   "' has " + std::to_string(filter.included.size());
  }
  return report;
}

}  // namespace detail

/// Efficiency of the dimension-wise entropy of the whole batch.
inline double information(const RepresentationBatch& batch, const BinningSpec& spec, bool corrected = true) {
  return dimensionwise_entropy(batch, spec, corrected).efficiency;
}

/// Efficiency of the dimension-wise entropy of the rows carrying `label`,
/// binned with the (global) edges in `spec`.
inline double conditional_entropy(const RepresentationBatch& batch, const BinningSpec& spec, const LabelSet& set,
                                  const std::string& label, bool corrected = true) {
  auto id = set.find(label);
  if (!id) fail(ErrorCode::missing_label, "label '" + label + "' not in set '" + set.name + "'");
  MeasureEngine engine(batch, spec, corrected, 1);
  std::uint32_t ids[] = {*id};
  return engine.label_stats(set, ids, false)[0].variation;
}

inline double variation(const RepresentationBatch& batch, const BinningSpec& spec, const LabelSet& set,
                        const MeasureOptions& options = {}) {
  MeasureEngine engine(batch, spec, options.corrected, options.threads);
  return detail::measure_set(engine, set, options).variation;
}

inline double regularity(const RepresentationBatch& batch, const BinningSpec& spec, const LabelSet& set,
                         const MeasureOptions& options = {}) {
  MeasureEngine engine(batch, spec, options.corrected, options.threads);
  return detail::measure_set(engine, set, options).regularity;
}

inline double disentanglement(const RepresentationBatch& batch, const BinningSpec& spec, const LabelSet& set,
                              const MeasureOptions& options = {}) {
  MeasureEngine engine(batch, spec, options.corrected, options.threads);
  auto report = detail::measure_set(engine, set, options);
  if (!report.disentanglement) fail(ErrorCode::undefined_measure, *report.disentanglement_error);
  return *report.disentanglement;
}

/// Measures every set against one shared binning. A failing set is reported
/// with its error and does not stop the others.
inline MeasureReport analyze(const RepresentationBatch& batch, const BinningSpec& spec, const std::vector<LabelSet>& sets,
                             const MeasureOptions& options = {}) {
  check_bin_count(spec.n_bins);
  if (options.min_count < 1) fail(ErrorCode::invalid_parameter, "min_count must be at least 1");
  MeasureEngine engine(batch, spec, options.corrected, options.threads);
  MeasureReport report;
  report.n_bins = spec.n_bins;
  report.corrected = options.corrected;
  report.min_count = options.min_count;
  report.weighted = options.weighted;
  report.regularity_baseline = options.regularity_baseline;
  report.rows = batch.rows();
  report.dims = batch.dims();
  report.information = engine.information();

  for (const auto& set : sets) {
    try {
      report.sets.push_back(detail::measure_set(engine, set, options));
    } catch (const Error& e) {
      SetReport failed;
      failed.name = set.name;
      failed.vocab_size = set.size();
      failed.error = e.what();
      failed.error_code = e.code();
      report.sets.push_back(std::move(failed));
    }
  }

  if (options.regularity_baseline) {
    const SetReport* base = report.find(*options.regularity_baseline);
    if (base && base->ok()) {
      double base_variation = base->variation;
      for (auto& s : report.sets) {
        if (s.ok() && s.name != *options.regularity_baseline) s.regularity_vs_baseline = base_variation - s.variation;
      }
    }
  }
  return report;
}

}  // namespace reprstruct
