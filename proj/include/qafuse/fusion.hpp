#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "qafuse/curve.hpp"
#include "qafuse/reference.hpp"
#include "qafuse/score_table.hpp"

namespace qafuse {

/// Non-negative per-feature fusion weights summing to one.
class WeightVector {
 public:
  WeightVector() = default;
  /// Throws DataError if empty, negative, non-finite or not summing to 1.
  explicit WeightVector(std::vector<double> weights);

  static WeightVector uniform(std::size_t features);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> values() const { return weights_; }
  std::size_t argmax() const;

 private:
  std::vector<double> weights_;
};

enum class FusionRule { sum, product };

FusionRule parse_fusion_rule(std::string_view text);
std::string_view to_string(FusionRule rule);

struct QafConfig {
  MatchConfig match;
  FusionRule rule = FusionRule::product;
  double epsilon_area = 1e-6;
  double epsilon_score = 1e-6;
  std::size_t curve_len = 1000;
  /// When false, areas come from min-max normalizing the raw sorted curve.
  bool use_reference = true;

  void validate() const;
};

/// Per-feature score lists of one query, all over the same gallery.
using FeatureScores = std::vector<std::span<const double>>;

/// Inverse-area weighting, w_i = (1/A_i) / sum_k (1/A_k). Areas are floored
/// at `epsilon_area` first.
WeightVector compute_weights(std::span<const double> areas, double epsilon_area = 1e-6);

/// sum_i w_i s_i, elementwise.
std::vector<double> fuse_sum(const FeatureScores& scores, const WeightVector& w);

/// prod_i s_i^{w_i}, evaluated as exp(sum_i w_i ln s_i) with every score
/// floored at `epsilon_score`.
std::vector<double> fuse_product(const FeatureScores& scores, const WeightVector& w,
                                 double epsilon_score = 1e-6);

std::vector<double> fuse(const FeatureScores& scores, const WeightVector& w, FusionRule rule,
                         double epsilon_score = 1e-6);

/// Effectiveness area of one sorted curve: down-sample, subtract the
/// matched reference, min-max normalize, sum. With no codebook the
/// reference step is skipped. A degenerate (constant) normalized curve
/// counts as a flat line, area len - 1.
double curve_area(std::span<const double> sorted_values, const ReferenceCodebook* codebook,
                  const QafConfig& cfg);

struct FusedQuery {
  WeightVector weights;
  std::vector<double> scores;        // fused, gallery order
  std::vector<std::size_t> ranking;  // gallery indices, best first
};

/// Unsupervised query-adaptive fusion of one query. Areas come from the
/// sorted curves; fusion uses the original (unnormalized) scores.
/// `codebooks` may be empty when cfg.use_reference is false.
FusedQuery qaf_query(std::span<const SortedCurve> curves,
                     std::span<const ReferenceCodebook> codebooks, const QafConfig& cfg);

/// Fuse with given weights and rank the result.
FusedQuery fuse_and_rank(const FeatureScores& scores, WeightVector weights, FusionRule rule,
                         double epsilon_score = 1e-6);

/// Produces the weights for query `q` of the aligned tables.
using WeightEstimator =
    std::function<WeightVector(std::span<const SortedCurve> curves, std::size_t q)>;

/// Run fusion over every query of aligned tables. Work is split over
/// `threads` workers (0 = hardware concurrency); output order is by query
/// index regardless.
std::vector<FusedQuery> fuse_tables(std::span<const ScoreTable> tables,
                                    const WeightEstimator& estimator, FusionRule rule,
                                    double epsilon_score = 1e-6, std::size_t threads = 1);

/// WeightEstimator for unsupervised QAF with per-feature codebooks.
WeightEstimator qaf_estimator(std::span<const ReferenceCodebook> codebooks, QafConfig cfg);

/// Check tables and codebooks line up: same feature order, shared curve_len
/// equal to cfg.curve_len. Emits a warning on stderr when v is clamped.
void check_qaf_inputs(std::span<const ScoreTable> tables,
                      std::span<const ReferenceCodebook> codebooks, const QafConfig& cfg);

}  // namespace qafuse
