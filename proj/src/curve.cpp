#include "qafuse/curve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "qafuse/error.hpp"

namespace qafuse {

namespace {

void require_finite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DataError(fmt::format("non-finite score at index {}", i));
    }
  }
}

}  // namespace

std::vector<double> SortedCurve::unsorted() const {
  std::vector<double> raw(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    raw[order[j]] = values[j];
  }
  return raw;
}

SortedCurve sort_descending(std::span<const double> row) {
  if (row.empty()) {
    throw DataError("empty score list");
  }
  require_finite(row);

  SortedCurve curve;
  curve.order.resize(row.size());
  std::iota(curve.order.begin(), curve.order.end(), std::size_t{0});
  std::stable_sort(curve.order.begin(), curve.order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  curve.values.reserve(row.size());
  for (std::size_t idx : curve.order) {
    curve.values.push_back(row[idx]);
  }
  return curve;
}

NormalizedCurve min_max_normalize(std::span<const double> curve) {
  if (curve.empty()) {
    throw DataError("empty score list");
  }
  require_finite(curve);

  const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
  const double lo = *lo_it;
  const double hi = *hi_it;

  NormalizedCurve out;
  out.values.resize(curve.size(), 0.0);
  if (hi == lo) {
    out.degenerate = true;
    return out;
  }
  const double range = hi - lo;
  for (std::size_t j = 0; j < curve.size(); ++j) {
    out.values[j] = (curve[j] - lo) / range;
  }
  return out;
}

double area_under(std::span<const double> curve) {
  return std::accumulate(curve.begin(), curve.end(), 0.0);
}

std::vector<double> downsample(std::span<const double> curve, std::size_t target_len) {
  if (target_len < 2) {
    throw DataError(fmt::format("downsample target length must be >= 2, got {}", target_len));
  }
  const std::size_t n = curve.size();
  if (n <= target_len) {
    return {curve.begin(), curve.end()};
  }
  std::vector<double> out(target_len);
  const std::size_t span_n = n - 1;
  const std::size_t span_l = target_len - 1;
  for (std::size_t j = 0; j < target_len; ++j) {
    // round-half-up of j * span_n / span_l in integer arithmetic
    const std::size_t idx = (2 * j * span_n + span_l) / (2 * span_l);
    out[j] = curve[idx];
  }
  return out;
}

}  // namespace qafuse
