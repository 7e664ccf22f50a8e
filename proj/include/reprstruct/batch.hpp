#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reprstruct/error.hpp"

namespace reprstruct {

/// Row-major M x D matrix of token-level vectors pooled across sentences.
/// Row i is aligned with row i of every label set built from the same
/// sentence records. Values are held in double precision; the on-disk
/// format is binary32, which widens exactly.
class RepresentationBatch {
 public:
  RepresentationBatch() = default;

  RepresentationBatch(std::size_t rows, std::size_t dims, std::vector<double> values)
      : rows_(rows), dims_(dims), values_(std::move(values)) {
    if (rows_ == 0 || dims_ == 0) {
      fail(ErrorCode::invalid_data, "batch must have at least one row and one dimension (rows=" +
                                        std::to_string(rows_) + " dims=" + std::to_string(dims_) + ")");
    }
    if (values_.size() != rows_ * dims_) {
      fail(ErrorCode::shape_error, "batch payload has " + std::to_string(values_.size()) +
                                       " values, expected " + std::to_string(rows_ * dims_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        fail(ErrorCode::invalid_data, "non-finite value at row " + std::to_string(i / dims_) +
                                          ", dim " + std::to_string(i % dims_));
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return dims_; }
  bool empty() const noexcept { return rows_ == 0; }

  double operator()(std::size_t row, std::size_t dim) const noexcept { return values_[row * dims_ + dim]; }

  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * dims_, dims_};
  }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const RepresentationBatch&, const RepresentationBatch&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dims_ = 0;
  std::vector<double> values_;
};

}  // namespace reprstruct
