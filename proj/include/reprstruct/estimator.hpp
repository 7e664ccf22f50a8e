#pragma once

// Equal-width per-dimension histogramming and discrete entropy estimation.
//
// A batch is cut into N equal-width bins per dimension between the attested
// column extremes. Bins are half-open [lo + k*w, lo + (k+1)*w) except that the
// column maximum (and anything beyond it) lands in the top bin and anything
// below lo lands in bin 0. A constant column is degenerate: every row maps to
// bin 0. All entropies are in bits; efficiencies divide by log2(N).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "reprstruct/batch.hpp"
#include "reprstruct/error.hpp"

namespace reprstruct {

inline constexpr std::size_t kDefaultBins = 100;
inline constexpr std::size_t kMaxBins = 65536;  // bin ids are stored as uint16
inline constexpr std::size_t kDefaultMaxSubset = 3;

struct BinningSpec {
  std::size_t n_bins = kDefaultBins;
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dims() const noexcept { return lo.size(); }
  bool degenerate(std::size_t d) const noexcept { return !(hi[d] > lo[d]); }
  double width(std::size_t d) const noexcept {
    return degenerate(d) ? 0.0 : (hi[d] - lo[d]) / static_cast<double>(n_bins);
  }

  std::size_t bin(std::size_t d, double x) const noexcept {
    if (degenerate(d)) return 0;
    double t = (x - lo[d]) / width(d);
    if (!(t >= 0.0)) return 0;
    if (t >= static_cast<double>(n_bins)) return n_bins - 1;
    return std::min(static_cast<std::size_t>(t), n_bins - 1);
  }

  std::vector<std::size_t> degenerate_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < dims(); ++d) {
      if (degenerate(d)) out.push_back(d);
    }
    return out;
  }

  friend bool operator==(const BinningSpec&, const BinningSpec&) = default;
};

inline void check_bin_count(std::size_t n_bins) {
  if (n_bins < 2 || n_bins > kMaxBins) {
    fail(ErrorCode::invalid_parameter,
         "bin count must be in [2, " + std::to_string(kMaxBins) + "], got " + std::to_string(n_bins));
  }
}

inline BinningSpec fit_bins(const RepresentationBatch& batch, std::size_t n_bins) {
  check_bin_count(n_bins);
  if (batch.empty()) fail(ErrorCode::invalid_data, "cannot fit bins on an empty batch");
  BinningSpec spec;
  spec.n_bins = n_bins;
  spec.lo.assign(batch.row(0).begin(), batch.row(0).end());
  spec.hi = spec.lo;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto row = batch.row(r);
    for (std::size_t d = 0; d < batch.dims(); ++d) {
      double x = row[d];
      if (!std::isfinite(x)) {
        fail(ErrorCode::invalid_data,
             "non-finite value at row " + std::to_string(r) + ", dim " + std::to_string(d));
      }
      spec.lo[d] = std::min(spec.lo[d], x);
      spec.hi[d] = std::max(spec.hi[d], x);
    }
  }
  return spec;
}

inline void check_shape(const RepresentationBatch& batch, const BinningSpec& spec) {
  if (batch.dims() != spec.dims()) {
    fail(ErrorCode::shape_error, "batch has " + std::to_string(batch.dims()) +
                                     " dims but binning spec has " + std::to_string(spec.dims()));
  }
}

/// Per-dimension bin counts; counts(d) has n_bins entries summing to total.
class HistogramSet {
 public:
  HistogramSet(std::size_t dims, std::size_t n_bins, std::size_t total)
      : dims_(dims), n_bins_(n_bins), total_(total), counts_(dims * n_bins, 0) {}

  std::size_t dims() const noexcept { return dims_; }
  std::size_t n_bins() const noexcept { return n_bins_; }
  std::size_t total() const noexcept { return total_; }

  std::span<const std::uint64_t> counts(std::size_t d) const noexcept {
    return {counts_.data() + d * n_bins_, n_bins_};
  }
  std::span<std::uint64_t> counts(std::size_t d) noexcept { return {counts_.data() + d * n_bins_, n_bins_}; }

  std::size_t nonempty(std::size_t d) const noexcept {
    auto c = counts(d);
    return static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [](auto v) { return v > 0; }));
  }

 private:
  std::size_t dims_;
  std::size_t n_bins_;
  std::size_t total_;
  std::vector<std::uint64_t> counts_;
};

inline HistogramSet discretize(const RepresentationBatch& batch, const BinningSpec& spec) {
  check_shape(batch, spec);
  HistogramSet hist(batch.dims(), spec.n_bins, batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto row = batch.row(r);
    for (std::size_t d = 0; d < batch.dims(); ++d) ++hist.counts(d)[spec.bin(d, row[d])];
  }
  return hist;
}

/// Row-major matrix of bin ids, one per (row, dim).
class BinIndexMatrix {
 public:
  BinIndexMatrix(const RepresentationBatch& batch, const BinningSpec& spec)
      : rows_(batch.rows()), dims_(batch.dims()), ids_(batch.rows() * batch.dims()) {
    check_shape(batch, spec);
    for (std::size_t r = 0; r < rows_; ++r) {
      auto row = batch.row(r);
      std::uint16_t* out = ids_.data() + r * dims_;
      for (std::size_t d = 0; d < dims_; ++d) out[d] = static_cast<std::uint16_t>(spec.bin(d, row[d]));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return dims_; }
  std::span<const std::uint16_t> row(std::size_t r) const noexcept { return {ids_.data() + r * dims_, dims_}; }

 private:
  std::size_t rows_;
  std::size_t dims_;
  std::vector<std::uint16_t> ids_;
};

namespace detail {

inline double plogp_bits(std::uint64_t count, std::uint64_t total) {
  double p = static_cast<double>(count) / static_cast<double>(total);
  return p * std::log2(p);
}

}  // namespace detail

/// Bias term added by the Miller-Madow correction, in bits.
inline double miller_madow_term(std::size_t occupied, std::size_t total) {
  if (occupied <= 1) return 0.0;
  return static_cast<double>(occupied - 1) / (2.0 * static_cast<double>(total) * std::numbers::ln2);
}

template <std::integral Count>
double entropy_mle(std::span<const Count> counts, std::size_t total) {
  if (total == 0) fail(ErrorCode::inconsistent_histogram, "histogram total must be at least 1");
  std::uint64_t sum = 0;
  double h = 0.0;
  for (Count c : counts) {
    if constexpr (std::is_signed_v<Count>) {
      if (c < 0) fail(ErrorCode::inconsistent_histogram, "negative bin count");
    }
    if (c == 0) continue;
    sum += static_cast<std::uint64_t>(c);
    h -= detail::plogp_bits(static_cast<std::uint64_t>(c), total);
  }
  if (sum != total) {
    fail(ErrorCode::inconsistent_histogram,
         "bin counts sum to " + std::to_string(sum) + " but total is " + std::to_string(total));
  }
  return h;
}

template <std::integral Count>
double entropy_miller_madow(std::span<const Count> counts, std::size_t total) {
  double h = entropy_mle(counts, total);
  auto occupied = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](Count c) { return c > 0; }));
  return h + miller_madow_term(occupied, total);
}

template <std::integral Count>
double entropy_mle(const std::vector<Count>& counts, std::size_t total) {
  return entropy_mle(std::span<const Count>(counts), total);
}
template <std::integral Count>
double entropy_miller_madow(const std::vector<Count>& counts, std::size_t total) {
  return entropy_miller_madow(std::span<const Count>(counts), total);
}

inline double efficiency(double bits, std::size_t n_bins) { return bits / std::log2(static_cast<double>(n_bins)); }

struct EntropyEstimate {
  std::size_t n_bins = 0;
  bool corrected = false;
  std::vector<double> per_dim;  // bits
  double mean = 0.0;            // bits
  double efficiency = 0.0;
};

inline EntropyEstimate dimensionwise_entropy(const HistogramSet& hist, bool corrected) {
  EntropyEstimate est;
  est.n_bins = hist.n_bins();
  est.corrected = corrected;
  est.per_dim.reserve(hist.dims());
  double sum = 0.0;
  for (std::size_t d = 0; d < hist.dims(); ++d) {
    double h = corrected ? entropy_miller_madow(hist.counts(d), hist.total()) : entropy_mle(hist.counts(d), hist.total());
    est.per_dim.push_back(h);
    sum += h;
  }
  est.mean = sum / static_cast<double>(hist.dims());
  est.efficiency = efficiency(est.mean, hist.n_bins());
  return est;
}

inline EntropyEstimate dimensionwise_entropy(const RepresentationBatch& batch, const BinningSpec& spec, bool corrected) {
  return dimensionwise_entropy(discretize(batch, spec), corrected);
}

/// Entropy (bits) of the joint distribution of bin-id tuples over `dims`.
/// Tuples are packed into 64-bit codes and counted after sorting, so memory
/// scales with M rather than N^|dims|.
inline double joint_subset_entropy(const RepresentationBatch& batch, const BinningSpec& spec,
                                   std::span<const std::size_t> dims, bool corrected,
                                   std::size_t max_subset = kDefaultMaxSubset) {
  check_shape(batch, spec);
  if (dims.empty() || dims.size() > max_subset) {
    fail(ErrorCode::invalid_parameter, "dimension subset size must be in [1, " + std::to_string(max_subset) +
                                           "], got " + std::to_string(dims.size()));
  }
  double space = std::pow(static_cast<double>(spec.n_bins), static_cast<double>(dims.size()));
  if (space > static_cast<double>(std::numeric_limits<std::uint64_t>::max())) {
    fail(ErrorCode::invalid_parameter, "bin-tuple space N^|dims| exceeds 64-bit codes");
  }
  for (std::size_t d : dims) {
    if (d >= batch.dims()) fail(ErrorCode::invalid_parameter, "dimension index " + std::to_string(d) + " out of range");
  }
  std::vector<std::uint64_t> codes(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    std::uint64_t code = 0;
    for (std::size_t d : dims) code = code * spec.n_bins + spec.bin(d, batch(r, d));
    codes[r] = code;
  }
  std::sort(codes.begin(), codes.end());
  std::vector<std::uint64_t> counts;
  for (std::size_t i = 0; i < codes.size();) {
    std::size_t j = i;
    while (j < codes.size() && codes[j] == codes[i]) ++j;
    counts.push_back(j - i);
    i = j;
  }
  return corrected ? entropy_miller_madow(counts, batch.rows()) : entropy_mle(counts, batch.rows());
}

inline double joint_subset_entropy(const RepresentationBatch& batch, const BinningSpec& spec,
                                   std::initializer_list<std::size_t> dims, bool corrected,
                                   std::size_t max_subset = kDefaultMaxSubset) {
  std::vector<std::size_t> v(dims);
  return joint_subset_entropy(batch, spec, std::span<const std::size_t>(v), corrected, max_subset);
}

/// Joint entropy normalized by |dims| * log2(N).
inline double joint_subset_efficiency(double bits, std::size_t subset_size, std::size_t n_bins) {
  return bits / (static_cast<double>(subset_size) * std::log2(static_cast<double>(n_bins)));
}

}  // namespace reprstruct
