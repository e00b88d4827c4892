#include "qafuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "qafuse/error.hpp"

namespace qafuse {

WeightVector::WeightVector(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) {
    throw DataError("weight vector is empty");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw DataError(fmt::format("invalid fusion weight {}", w));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DataError(fmt::format("fusion weights sum to {}, expected 1", total));
  }
}

WeightVector WeightVector::uniform(std::size_t features) {
  if (features == 0) {
    throw DataError("weight vector is empty");
  }
  return WeightVector(std::vector<double>(features, 1.0 / static_cast<double>(features)));
}

std::size_t WeightVector::argmax() const {
  return static_cast<std::size_t>(std::max_element(weights_.begin(), weights_.end()) -
                                  weights_.begin());
}

FusionRule parse_fusion_rule(std::string_view text) {
  if (text == "sum") return FusionRule::sum;
  if (text == "product") return FusionRule::product;
  throw ConfigError(fmt::format("unknown fusion rule '{}' (expected sum or product)", text));
}

std::string_view to_string(FusionRule rule) {
  return rule == FusionRule::sum ? "sum" : "product";
}

void QafConfig::validate() const {
  if (!(epsilon_area > 0.0) || !(epsilon_score > 0.0)) {
    throw ConfigError("epsilon_area and epsilon_score must be positive");
  }
  if (curve_len < 2) {
    throw ConfigError("curve_len must be >= 2");
  }
  match.validate();
}

WeightVector compute_weights(std::span<const double> areas, double epsilon_area) {
  if (areas.empty()) {
    throw DataError("no areas to weight");
  }
  std::vector<double> inv(areas.size());
  for (std::size_t i = 0; i < areas.size(); ++i) {
    inv[i] = 1.0 / std::max(areas[i], epsilon_area);
  }
  const double total = std::accumulate(inv.begin(), inv.end(), 0.0);
  for (double& x : inv) {
    x /= total;
  }
  return WeightVector(std::move(inv));
}

namespace {

std::size_t common_length(const FeatureScores& scores, const WeightVector& w) {
  if (scores.empty() || scores.size() != w.size()) {
    throw DataError(fmt::format("{} score lists for {} weights", scores.size(), w.size()));
  }
  const std::size_t n = scores.front().size();
  for (const auto& s : scores) {
    if (s.size() != n) {
      throw DataError("score lists differ in length");
    }
  }
  return n;
}

}  // namespace

std::vector<double> fuse_sum(const FeatureScores& scores, const WeightVector& w) {
  const std::size_t n = common_length(scores, w);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t d = 0; d < n; ++d) {
      out[d] += w[i] * scores[i][d];
    }
  }
  return out;
}

std::vector<double> fuse_product(const FeatureScores& scores, const WeightVector& w,
                                 double epsilon_score) {
  const std::size_t n = common_length(scores, w);
  std::vector<double> log_sum(n, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t d = 0; d < n; ++d) {
      log_sum[d] += w[i] * std::log(std::max(scores[i][d], epsilon_score));
    }
  }
  for (double& x : log_sum) {
    x = std::exp(x);
  }
  return log_sum;
}

std::vector<double> fuse(const FeatureScores& scores, const WeightVector& w, FusionRule rule,
                         double epsilon_score) {
  return rule == FusionRule::sum ? fuse_sum(scores, w) : fuse_product(scores, w, epsilon_score);
}

double curve_area(std::span<const double> sorted_values, const ReferenceCodebook* codebook,
                  const QafConfig& cfg) {
  const std::size_t len = codebook ? codebook->curve_len : cfg.curve_len;
  const std::vector<double> curve = downsample(sorted_values, len);
  NormalizedCurve normalized;
  if (codebook) {
    normalized = subtract_and_normalize(curve, match_reference(curve, *codebook, cfg.match));
  } else {
    normalized = min_max_normalize(curve);
  }
  if (normalized.degenerate) {
    return static_cast<double>(normalized.values.size() - 1);
  }
  return area_under(normalized.values);
}

FusedQuery fuse_and_rank(const FeatureScores& scores, WeightVector weights, FusionRule rule,
                         double epsilon_score) {
  FusedQuery out;
  out.scores = fuse(scores, weights, rule, epsilon_score);
  out.ranking = sort_descending(out.scores).order;
  out.weights = std::move(weights);
  return out;
}

FusedQuery qaf_query(std::span<const SortedCurve> curves,
                     std::span<const ReferenceCodebook> codebooks, const QafConfig& cfg) {
  if (curves.empty()) {
    throw DataError("no feature curves to fuse");
  }
  if (cfg.use_reference && codebooks.size() != curves.size()) {
    throw DataError(fmt::format("{} curves but {} codebooks", curves.size(), codebooks.size()));
  }
  std::vector<double> areas(curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) {
    areas[i] = curve_area(curves[i].values, cfg.use_reference ? &codebooks[i] : nullptr, cfg);
  }
  std::vector<std::vector<double>> raw;
  raw.reserve(curves.size());
  for (const auto& c : curves) {
    raw.push_back(c.unsorted());
  }
  FeatureScores views(raw.begin(), raw.end());
  return fuse_and_rank(views, compute_weights(areas, cfg.epsilon_area), cfg.rule,
                       cfg.epsilon_score);
}

std::vector<FusedQuery> fuse_tables(std::span<const ScoreTable> tables,
                                    const WeightEstimator& estimator, FusionRule rule,
                                    double epsilon_score, std::size_t threads) {
  if (tables.empty()) {
    throw DataError("no score tables to fuse");
  }
  const std::size_t nq = tables.front().num_queries();
  for (const auto& t : tables) {
    if (t.num_queries() != nq || t.num_gallery() != tables.front().num_gallery()) {
      throw DataError("score tables are not aligned");
    }
  }

  std::vector<FusedQuery> results(nq);
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<SortedCurve> curves(tables.size());
    FeatureScores scores(tables.size());
    for (std::size_t q = begin; q < end; ++q) {
      for (std::size_t i = 0; i < tables.size(); ++i) {
        curves[i] = sort_descending(tables[i].row(q));
        scores[i] = tables[i].row(q);
      }
      results[q] = fuse_and_rank(scores, estimator(curves, q), rule, epsilon_score);
    }
  };

  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = std::min(threads, std::max<std::size_t>(nq, 1));
  if (threads <= 1) {
    work(0, nq);
    return results;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (nq + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(nq, begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

WeightEstimator qaf_estimator(std::span<const ReferenceCodebook> codebooks, QafConfig cfg) {
  return [codebooks, cfg](std::span<const SortedCurve> curves, std::size_t) {
    std::vector<double> areas(curves.size());
    for (std::size_t i = 0; i < curves.size(); ++i) {
      areas[i] = curve_area(curves[i].values, cfg.use_reference ? &codebooks[i] : nullptr, cfg);
    }
    return compute_weights(areas, cfg.epsilon_area);
  };
}

void check_qaf_inputs(std::span<const ScoreTable> tables,
                      std::span<const ReferenceCodebook> codebooks, const QafConfig& cfg) {
  cfg.validate();
  if (tables.empty()) {
    throw DataError("no score tables");
  }
  if (!cfg.use_reference) {
    return;
  }
  if (codebooks.size() != tables.size()) {
    throw DataError(fmt::format("{} score tables but {} codebooks", tables.size(),
                                codebooks.size()));
  }
  const std::size_t len = std::min(cfg.curve_len, tables.front().num_gallery());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& cb = codebooks[i];
    cb.validate();
    if (cb.feature_id != tables[i].feature_id) {
      throw DataError(fmt::format("codebook {} is for feature '{}' but table {} is '{}'", i,
                                  cb.feature_id, i, tables[i].feature_id));
    }
    if (cb.curve_len != len) {
      throw DataError(fmt::format("codebook '{}' has curve length {}, expected {}", cb.feature_id,
                                  cb.curve_len, len));
    }
  }
  if (cfg.match.v > len) {
    std::cerr << fmt::format("warning: match segment end v={} exceeds curve length {}, clamping\n",
                             cfg.match.v, len);
  }
}

}  // namespace qafuse
