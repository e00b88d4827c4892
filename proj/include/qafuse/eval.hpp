#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qafuse/fusion.hpp"
#include "qafuse/score_table.hpp"

namespace qafuse {

/// Relevant gallery indices for each query, ascending.
using Relevance = std::vector<std::vector<std::size_t>>;

enum class QrelsMode {
  pairs,     // lines "query_id gallery_id"
  identity,  // lines "item_id identity_label"; same label means relevant
};

QrelsMode parse_qrels_mode(std::string_view text);

struct Qrels {
  QrelsMode mode = QrelsMode::pairs;
  std::map<std::string, std::set<std::string>> relevant;
  std::map<std::string, std::string> labels;

  /// Map onto table indices. Throws DataError for ids outside the universe
  /// (pairs mode) or items without a label (identity mode). With
  /// `exclude_self`, a gallery item with the query's own id never counts.
  Relevance resolve(std::span<const std::string> query_ids,
                    std::span<const std::string> gallery_ids, bool exclude_self = false) const;

  /// Judgements with query and gallery roles exchanged (pairs are inverted;
  /// identity labels are symmetric already).
  Qrels swapped() const;
};

Qrels read_qrels(std::istream& in, QrelsMode mode);
Qrels load_qrels(const std::filesystem::path& path, QrelsMode mode);
void write_qrels(std::ostream& out, const Qrels& qrels);

/// Mean over relevant hits of precision at the hit's rank.
double average_precision(std::span<const std::size_t> ranking,
                         std::span<const std::size_t> relevant);

/// Same value computed from unsorted fused scores, ranking by descending
/// score with ties to the lower gallery index. O(|relevant| * N).
double average_precision_from_scores(std::span<const double> scores,
                                     std::span<const std::size_t> relevant);

/// Number of relevant items among the top four.
double ns_score(std::span<const std::size_t> ranking, std::span<const std::size_t> relevant);

/// Fraction of queries whose first-ranked item is relevant.
double rank1_accuracy(std::span<const std::vector<std::size_t>> rankings,
                      const Relevance& relevant);

enum class Metric { map, rank1, ns };

Metric parse_metric(std::string_view text);
std::string_view to_string(Metric metric);

struct MetricReport {
  std::string method;
  std::vector<std::string> query_ids;  // evaluated queries only
  std::vector<double> ap;
  std::vector<double> ns;
  std::vector<char> top1;
  double map = 0.0;
  double ns_mean = 0.0;  // NaN when the gallery is smaller than four
  double rank1 = 0.0;
  std::size_t excluded = 0;  // queries with no relevant item

  double value(Metric metric) const;
};

/// Queries without relevant items are skipped and counted in `excluded`.
MetricReport evaluate(std::string method, std::span<const std::vector<std::size_t>> rankings,
                      const Relevance& relevant, std::span<const std::string> query_ids);

MetricReport evaluate(std::string method, std::span<const FusedQuery> fused,
                      const Relevance& relevant, std::span<const std::string> query_ids);

/// Pool the two runs of a query/gallery swap: summary values are the mean
/// of the two runs' values, per-query lists are concatenated.
MetricReport average_directions(const MetricReport& forward, const MetricReport& swapped);

/// Order by median rank across lists (mean of the two middle ranks for an
/// even count), then mean rank, then gallery index.
std::vector<std::size_t> rank_aggregation(std::span<const std::vector<std::size_t>> rankings);

/// Number of weight vectors on the simplex with K entries in multiples of
/// 1/steps.
std::size_t simplex_grid_size(std::size_t features, std::size_t steps);

struct GridSearchResult {
  WeightVector weights;
  double metric = 0.0;
  std::size_t points = 0;
};

/// Exhaustive search over fixed global weights on the simplex grid. Ties go
/// to the lexicographically smallest weight vector. Throws ConfigError if
/// the step does not divide 1 or the grid exceeds 1e7 points.
GridSearchResult global_grid_search(std::span<const ScoreTable> tables,
                                    const Relevance& relevant, FusionRule rule, double step,
                                    Metric metric, double epsilon_score = 1e-6);

/// Metric of one fixed weight vector over all queries, same scoring path
/// as the grid search.
double global_weight_metric(std::span<const ScoreTable> tables, const Relevance& relevant,
                            FusionRule rule, const WeightVector& weights, Metric metric,
                            double epsilon_score = 1e-6);

}  // namespace qafuse
