#include "qafuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "qafuse/error.hpp"

namespace qafuse {

QrelsMode parse_qrels_mode(std::string_view text) {
  if (text == "pairs") return QrelsMode::pairs;
  if (text == "identity") return QrelsMode::identity;
  throw ConfigError(fmt::format("unknown qrels mode '{}' (expected pairs or identity)", text));
}

Metric parse_metric(std::string_view text) {
  if (text == "map") return Metric::map;
  if (text == "rank1") return Metric::rank1;
  if (text == "ns") return Metric::ns;
  throw ConfigError(fmt::format("unknown metric '{}' (expected map, rank1 or ns)", text));
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::map: return "map";
    case Metric::rank1: return "rank1";
    case Metric::ns: return "ns";
  }
  return "map";
}

// ---------------------------------------------------------------------------
// Qrels

Qrels Qrels::swapped() const {
  Qrels out = *this;
  if (mode == QrelsMode::pairs) {
    out.relevant.clear();
    for (const auto& [query, items] : relevant) {
      for (const auto& item : items) out.relevant[item].insert(query);
    }
  }
  return out;
}

Relevance Qrels::resolve(std::span<const std::string> query_ids,
                         std::span<const std::string> gallery_ids, bool exclude_self) const {
  std::unordered_map<std::string, std::size_t> gidx;
  for (std::size_t g = 0; g < gallery_ids.size(); ++g) gidx.emplace(gallery_ids[g], g);

  Relevance out(query_ids.size());
  if (mode == QrelsMode::pairs) {
    std::unordered_map<std::string, std::size_t> qidx;
    for (std::size_t q = 0; q < query_ids.size(); ++q) qidx.emplace(query_ids[q], q);
    for (const auto& [query, items] : relevant) {
      auto qit = qidx.find(query);
      if (qit == qidx.end()) {
        throw DataError(fmt::format("qrels query '{}' is not among the scored queries", query));
      }
      for (const auto& item : items) {
        auto git = gidx.find(item);
        if (git == gidx.end()) {
          throw DataError(fmt::format("qrels gallery item '{}' is not in the gallery", item));
        }
        if (exclude_self && item == query) continue;
        out[qit->second].push_back(git->second);
      }
    }
  } else {
    std::unordered_map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t g = 0; g < gallery_ids.size(); ++g) {
      auto it = labels.find(gallery_ids[g]);
      if (it == labels.end()) {
        throw DataError(fmt::format("gallery item '{}' has no identity label", gallery_ids[g]));
      }
      by_label[it->second].push_back(g);
    }
    for (std::size_t q = 0; q < query_ids.size(); ++q) {
      auto it = labels.find(query_ids[q]);
      if (it == labels.end()) {
        throw DataError(fmt::format("query '{}' has no identity label", query_ids[q]));
      }
      auto hit = by_label.find(it->second);
      if (hit == by_label.end()) continue;
      for (std::size_t g : hit->second) {
        if (exclude_self && gallery_ids[g] == query_ids[q]) continue;
        out[q].push_back(g);
      }
    }
  }
  for (auto& r : out) std::sort(r.begin(), r.end());
  return out;
}

Qrels read_qrels(std::istream& in, QrelsMode mode) {
  Qrels qrels;
  qrels.mode = mode;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra)) {
      throw DataError(fmt::format("qrels line {}: expected two fields", line_no));
    }
    if (mode == QrelsMode::pairs) {
      qrels.relevant[a].insert(b);
    } else {
      auto [it, inserted] = qrels.labels.emplace(a, b);
      if (!inserted && it->second != b) {
        throw DataError(fmt::format("qrels line {}: '{}' relabelled from '{}' to '{}'", line_no, a,
                                    it->second, b));
      }
    }
  }
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path, QrelsMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open qrels '{}'", path.string()));
  return read_qrels(in, mode);
}

void write_qrels(std::ostream& out, const Qrels& qrels) {
  if (qrels.mode == QrelsMode::pairs) {
    for (const auto& [q, items] : qrels.relevant) {
      for (const auto& g : items) out << q << ' ' << g << '\n';
    }
  } else {
    for (const auto& [item, label] : qrels.labels) out << item << ' ' << label << '\n';
  }
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::vector<char> mask_of(std::size_t n, std::span<const std::size_t> relevant) {
  std::vector<char> mask(n, 0);
  for (std::size_t g : relevant) {
    if (g < n) mask[g] = 1;
  }
  return mask;
}

std::size_t max_index(std::span<const std::size_t> ranking) {
  return ranking.empty() ? 0 : *std::max_element(ranking.begin(), ranking.end()) + 1;
}

/// 1-based ranks of the relevant items under (score desc, index asc), sorted.
std::vector<std::size_t> relevant_ranks(std::span<const double> scores,
                                        std::span<const std::size_t> relevant) {
  std::vector<std::size_t> ranks;
  ranks.reserve(relevant.size());
  for (std::size_t r : relevant) {
    const double s = scores[r];
    std::size_t ahead = 0;
    for (std::size_t d = 0; d < scores.size(); ++d) {
      ahead += (scores[d] > s) || (scores[d] == s && d < r);
    }
    ranks.push_back(ahead + 1);
  }
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

double ap_from_ranks(std::span<const std::size_t> ranks, std::size_t num_relevant) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    acc += static_cast<double>(i + 1) / static_cast<double>(ranks[i]);
  }
  return acc / static_cast<double>(num_relevant);
}

}  // namespace

double average_precision(std::span<const std::size_t> ranking,
                         std::span<const std::size_t> relevant) {
  if (relevant.empty()) {
    throw DataError("average precision needs at least one relevant item");
  }
  const auto mask = mask_of(std::max(max_index(ranking), max_index(relevant)), relevant);
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (mask[ranking[pos]]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(pos + 1);
    }
  }
  return acc / static_cast<double>(relevant.size());
}

double average_precision_from_scores(std::span<const double> scores,
                                     std::span<const std::size_t> relevant) {
  if (relevant.empty()) {
    throw DataError("average precision needs at least one relevant item");
  }
  return ap_from_ranks(relevant_ranks(scores, relevant), relevant.size());
}

double ns_score(std::span<const std::size_t> ranking, std::span<const std::size_t> relevant) {
  if (ranking.size() < 4) {
    throw DataError(fmt::format("N-S score needs at least 4 ranked items, got {}", ranking.size()));
  }
  const auto mask = mask_of(std::max(max_index(ranking), max_index(relevant)), relevant);
  double count = 0.0;
  for (std::size_t pos = 0; pos < 4; ++pos) count += mask[ranking[pos]];
  return count;
}

double rank1_accuracy(std::span<const std::vector<std::size_t>> rankings,
                      const Relevance& relevant) {
  if (rankings.size() != relevant.size()) {
    throw DataError("rankings and relevance differ in query count");
  }
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (rankings[q].empty()) continue;
    hits += std::binary_search(relevant[q].begin(), relevant[q].end(), rankings[q].front());
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double MetricReport::value(Metric metric) const {
  switch (metric) {
    case Metric::map: return map;
    case Metric::rank1: return rank1;
    case Metric::ns: return ns_mean;
  }
  return map;
}

MetricReport evaluate(std::string method, std::span<const std::vector<std::size_t>> rankings,
                      const Relevance& relevant, std::span<const std::string> query_ids) {
  if (rankings.size() != relevant.size() || rankings.size() != query_ids.size()) {
    throw DataError("rankings, relevance and query ids differ in length");
  }
  MetricReport report;
  report.method = std::move(method);
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (relevant[q].empty()) {
      ++report.excluded;
      continue;
    }
    report.query_ids.push_back(query_ids[q]);
    report.ap.push_back(average_precision(rankings[q], relevant[q]));
    report.ns.push_back(rankings[q].size() >= 4 ? ns_score(rankings[q], relevant[q])
                                                : std::numeric_limits<double>::quiet_NaN());
    report.top1.push_back(!rankings[q].empty() &&
                          std::binary_search(relevant[q].begin(), relevant[q].end(),
                                             rankings[q].front()));
  }
  const double n = static_cast<double>(report.ap.size());
  if (!report.ap.empty()) {
    report.map = std::accumulate(report.ap.begin(), report.ap.end(), 0.0) / n;
    report.ns_mean = std::accumulate(report.ns.begin(), report.ns.end(), 0.0) / n;
    report.rank1 = std::accumulate(report.top1.begin(), report.top1.end(), 0.0) / n;
  }
  return report;
}

MetricReport average_directions(const MetricReport& forward, const MetricReport& swapped) {
  MetricReport r = forward;
  auto append = [](auto& into, const auto& from) { into.insert(into.end(), from.begin(), from.end()); };
  append(r.query_ids, swapped.query_ids);
  append(r.ap, swapped.ap);
  append(r.ns, swapped.ns);
  append(r.top1, swapped.top1);
  r.map = 0.5 * (forward.map + swapped.map);
  r.ns_mean = 0.5 * (forward.ns_mean + swapped.ns_mean);
  r.rank1 = 0.5 * (forward.rank1 + swapped.rank1);
  r.excluded = forward.excluded + swapped.excluded;
  return r;
}

MetricReport evaluate(std::string method, std::span<const FusedQuery> fused,
                      const Relevance& relevant, std::span<const std::string> query_ids) {
  std::vector<std::vector<std::size_t>> rankings;
  rankings.reserve(fused.size());
  for (const auto& f : fused) rankings.push_back(f.ranking);
  return evaluate(std::move(method), rankings, relevant, query_ids);
}

// ---------------------------------------------------------------------------
// Baselines

std::vector<std::size_t> rank_aggregation(std::span<const std::vector<std::size_t>> rankings) {
  if (rankings.empty()) {
    throw DataError("rank aggregation needs at least one ranking");
  }
  const std::size_t n = rankings.front().size();
  const std::size_t k = rankings.size();
  // ranks[g * k + i] = 1-based rank of item g in list i
  std::vector<double> ranks(n * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (rankings[i].size() != n) {
      throw DataError("rankings cover different gallery sizes");
    }
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t g = rankings[i][pos];
      if (g >= n || ranks[g * k + i] != 0.0) {
        throw DataError(fmt::format("ranking {} is not a permutation of the gallery", i));
      }
      ranks[g * k + i] = static_cast<double>(pos + 1);
    }
  }
  std::vector<double> median(n), mean(n);
  std::vector<double> buf(k);
  for (std::size_t g = 0; g < n; ++g) {
    std::copy_n(ranks.begin() + static_cast<std::ptrdiff_t>(g * k), k, buf.begin());
    std::sort(buf.begin(), buf.end());
    median[g] = k % 2 ? buf[k / 2] : 0.5 * (buf[k / 2 - 1] + buf[k / 2]);
    mean[g] = std::accumulate(buf.begin(), buf.end(), 0.0) / static_cast<double>(k);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (median[a] != median[b]) return median[a] < median[b];
    if (mean[a] != mean[b]) return mean[a] < mean[b];
    return a < b;
  });
  return order;
}

std::size_t simplex_grid_size(std::size_t features, std::size_t steps) {
  // C(steps + features - 1, features - 1), saturating
  if (features == 0) return 0;
  const std::size_t r = features - 1;
  double count = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    count = count * static_cast<double>(steps + i) / static_cast<double>(i);
    if (count > 1e18) return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(std::llround(count));
}

namespace {

struct PreparedScores {
  // per feature, per query: score (sum) or floored log score (product)
  std::vector<std::vector<double>> values;
  std::size_t nq = 0;
  std::size_t ng = 0;
};

PreparedScores prepare(std::span<const ScoreTable> tables, const Relevance& relevant,
                       FusionRule rule, double epsilon_score) {
  if (tables.empty()) throw DataError("no score tables");
  PreparedScores p;
  p.nq = tables.front().num_queries();
  p.ng = tables.front().num_gallery();
  if (relevant.size() != p.nq) throw DataError("relevance does not match query count");
  for (const auto& t : tables) {
    if (t.num_queries() != p.nq || t.num_gallery() != p.ng) {
      throw DataError("score tables are not aligned");
    }
    std::vector<double> v = t.scores;
    if (rule == FusionRule::product) {
      for (double& x : v) x = std::log(std::max(x, epsilon_score));
    }
    p.values.push_back(std::move(v));
  }
  return p;
}

double score_weights(const PreparedScores& p, const Relevance& relevant,
                     std::span<const double> w, Metric metric, std::vector<double>& fused) {
  double total = 0.0;
  std::size_t counted = 0;
  fused.resize(p.ng);
  for (std::size_t q = 0; q < p.nq; ++q) {
    if (relevant[q].empty()) continue;
    std::fill(fused.begin(), fused.end(), 0.0);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double* row = p.values[i].data() + q * p.ng;
      for (std::size_t d = 0; d < p.ng; ++d) fused[d] += w[i] * row[d];
    }
    const auto ranks = relevant_ranks(fused, relevant[q]);
    switch (metric) {
      case Metric::map:
        total += ap_from_ranks(ranks, relevant[q].size());
        break;
      case Metric::rank1:
        total += ranks.front() == 1;
        break;
      case Metric::ns:
        total += static_cast<double>(
            std::count_if(ranks.begin(), ranks.end(), [](std::size_t r) { return r <= 4; }));
        break;
    }
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace

double global_weight_metric(std::span<const ScoreTable> tables, const Relevance& relevant,
                            FusionRule rule, const WeightVector& weights, Metric metric,
                            double epsilon_score) {
  const auto p = prepare(tables, relevant, rule, epsilon_score);
  if (weights.size() != p.values.size()) throw DataError("weight count does not match features");
  std::vector<double> fused;
  return score_weights(p, relevant, weights.values(), metric, fused);
}

GridSearchResult global_grid_search(std::span<const ScoreTable> tables,
                                    const Relevance& relevant, FusionRule rule, double step,
                                    Metric metric, double epsilon_score) {
  if (!(step > 0.0) || step > 1.0) {
    throw ConfigError(fmt::format("grid step {} must lie in (0, 1]", step));
  }
  const double inv = 1.0 / step;
  const auto steps = static_cast<std::size_t>(std::llround(inv));
  if (std::abs(static_cast<double>(steps) * step - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("grid step {} does not divide 1 evenly", step));
  }
  const std::size_t k = tables.size();
  const std::size_t points = simplex_grid_size(k, steps);
  if (points > 10'000'000) {
    throw ConfigError(fmt::format("grid of {} points is intractable; use a larger step", points));
  }
  const auto p = prepare(tables, relevant, rule, epsilon_score);

  // Enumerate compositions of `steps` into k parts in lexicographic order.
  std::vector<std::size_t> units(k, 0);
  units.back() = steps;
  std::vector<double> w(k), best_w;
  std::vector<double> fused;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t visited = 0;
  while (true) {
    for (std::size_t i = 0; i < k; ++i) w[i] = static_cast<double>(units[i]) / static_cast<double>(steps);
    const double value = score_weights(p, relevant, w, metric, fused);
    ++visited;
    if (value > best) {
      best = value;
      best_w = w;
    }
    // next composition: find the rightmost position (before last) we can increment
    if (k == 1) break;
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(k) - 2;
    while (i >= 0) {
      const std::size_t used =
          std::accumulate(units.begin(), units.begin() + i + 1, std::size_t{0});
      if (used < steps) break;
      --i;
    }
    if (i < 0) break;
    ++units[static_cast<std::size_t>(i)];
    std::fill(units.begin() + i + 1, units.end(), std::size_t{0});
    const std::size_t used =
        std::accumulate(units.begin(), units.end() - 1, std::size_t{0});
    units.back() = steps - used;
  }
  return {WeightVector(best_w), best, visited};
}

}  // namespace qafuse
