#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qafuse/eval.hpp"
#include "qafuse/random.hpp"
#include "qafuse/score_table.hpp"

namespace qafuse {

struct ScoreDistribution {
  enum class Family { beta, uniform, point };
  Family family = Family::beta;
  double a = 2.0;  // beta: alpha; uniform: low; point: value
  double b = 2.0;  // beta: beta; uniform: high

  static ScoreDistribution beta(double a, double b) { return {Family::beta, a, b}; }
  static ScoreDistribution uniform(double lo, double hi) { return {Family::uniform, lo, hi}; }
  static ScoreDistribution point(double value) { return {Family::point, value, 0.0}; }

  /// `shape_scale` multiplies the beta alpha parameter (ignored otherwise).
  double sample(Engine& engine, double shape_scale = 1.0) const;
  void validate() const;
};

/// How one synthetic feature scores true and false matches.
struct FeatureProfile {
  std::string name;
  ScoreDistribution positive = ScoreDistribution::beta(8, 2);
  ScoreDistribution negative = ScoreDistribution::beta(2, 8);
  /// Probability that a query's true matches are scored from `positive`;
  /// otherwise they are drawn from `negative` and the feature is useless for
  /// that query.
  double informative_rate = 1.0;
  /// Features sharing a non-empty group share the per-query informative
  /// draw.
  std::string group;
  /// Per query, the negative beta alpha is scaled by exp(U(-j, j)), which
  /// varies the shape of the tail from query to query.
  double tail_jitter = 0.0;
  /// When set, an uninformative query draws its whole row from this
  /// distribution instead of `negative`.
  std::optional<ScoreDistribution> uninformative;

  static FeatureProfile good(std::string name);
  static FeatureProfile bad(std::string name);
};

struct SynthSpec {
  std::size_t num_queries = 500;
  std::size_t gallery_size = 1000;
  std::size_t relevant_per_query = 1;
  std::vector<FeatureProfile> features;
  std::uint64_t seed = 0;
  std::uint64_t correlation_seed = 0;
  /// No query has any relevant item (reference-codebook corpora).
  bool irrelevant = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& spec);
void from_json(const nlohmann::json& j, SynthSpec& spec);

struct SynthData {
  std::vector<ScoreTable> tables;
  Qrels qrels;
  Relevance relevance;
  /// informative[i][q]: whether feature i scored query q's true matches
  /// from its positive distribution.
  std::vector<std::vector<char>> informative;
};

/// Deterministic given the spec. Query ids are "q00000"..., gallery ids
/// "g00000"...
SynthData generate(const SynthSpec& spec);

/// Append `count` chance-level features (both distributions beta(2,2)).
void add_random_features(std::vector<ScoreTable>& tables, std::size_t count, std::uint64_t seed);

}  // namespace qafuse
