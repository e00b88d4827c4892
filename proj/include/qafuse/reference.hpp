#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qafuse/curve.hpp"
#include "qafuse/score_table.hpp"

namespace qafuse {

/// Sorted score curves collected from a corpus in which no gallery item is
/// relevant to any query. They model the tail a curve has when the feature
/// finds nothing.
struct ReferenceCodebook {
  std::string feature_id;
  std::size_t curve_len = 0;
  std::uint64_t seed = 0;
  std::string provenance;
  std::vector<std::vector<double>> curves;

  std::size_t size() const { return curves.size(); }
  /// Throws DataError unless every curve has `curve_len` non-increasing values.
  void validate() const;
};

enum class MatchMethod { nearest, knn_average };

/// Ranks are 1-based and inclusive: the matching segment is curve[u..v].
struct MatchConfig {
  std::size_t u = 1;
  std::size_t v = 400;
  std::size_t k = 5;
  MatchMethod method = MatchMethod::knn_average;

  void validate() const;
  /// Copy with v clamped to `curve_len`.
  MatchConfig clamped(std::size_t curve_len) const;
};

/// Select `num_queries` rows uniformly at random (seeded), sort each row
/// and down-sample it to `curve_len`. Selected rows keep their table order.
ReferenceCodebook build_codebook(const ScoreTable& irrelevant, std::size_t num_queries,
                                 std::size_t curve_len, std::uint64_t seed,
                                 std::string provenance = {});

/// Reference curve whose segment [u..v] is closest (Euclidean) to the
/// query curve's segment. knn_average returns the elementwise mean of the k
/// closest; distance ties go to the lower codebook index. k is capped at the
/// codebook size and v at the curve length.
std::vector<double> match_reference(std::span<const double> curve,
                                    const ReferenceCodebook& codebook, const MatchConfig& cfg);

/// min-max normalize (curve - reference).
NormalizedCurve subtract_and_normalize(std::span<const double> curve,
                                       std::span<const double> reference);

void write_codebook(std::ostream& out, const ReferenceCodebook& codebook);
ReferenceCodebook read_codebook(std::istream& in);
void save_codebook(const std::filesystem::path& path, const ReferenceCodebook& codebook);
ReferenceCodebook load_codebook(const std::filesystem::path& path);

}  // namespace qafuse
