#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qafuse {

/// One query's scores for one feature in descending order.
/// `order[j]` is the gallery index that landed at sorted position j.
struct SortedCurve {
  std::vector<double> values;
  std::vector<std::size_t> order;

  std::size_t size() const { return values.size(); }
  /// Scatter the sorted values back to gallery order.
  std::vector<double> unsorted() const;
};

/// Result of min-max normalization. A constant input has no range, so it
/// maps to all zeros and sets `degenerate`.
struct NormalizedCurve {
  std::vector<double> values;
  bool degenerate = false;
};

/// Stable descending sort; equal scores keep ascending gallery index.
/// Throws DataError on an empty row or a non-finite score.
SortedCurve sort_descending(std::span<const double> row);

NormalizedCurve min_max_normalize(std::span<const double> curve);

/// Discrete area under a rank-indexed curve (unit spacing).
double area_under(std::span<const double> curve);

/// Pick `target_len` points at evenly spaced fractional ranks,
/// idx_j = round(j * (N - 1) / (L - 1)). First and last ranks are always
/// kept. Curves no longer than `target_len` are returned unchanged.
std::vector<double> downsample(std::span<const double> curve, std::size_t target_len);

}  // namespace qafuse
