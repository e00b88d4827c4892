#include "qafuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/random/beta_distribution.hpp>
#include <fmt/format.h>

#include "qafuse/error.hpp"

namespace qafuse {

double ScoreDistribution::sample(Engine& engine, double shape_scale) const {
  switch (family) {
    case Family::beta: {
      boost::random::beta_distribution<double> dist(a * shape_scale, b);
      return dist(engine);
    }
    case Family::uniform:
      return uniform_real(engine, a, b);
    case Family::point:
      return a;
  }
  return a;
}

void ScoreDistribution::validate() const {
  const bool ok = std::isfinite(a) && std::isfinite(b) &&
                  (family != Family::beta || (a > 0 && b > 0)) &&
                  (family != Family::uniform || a < b);
  if (!ok) {
    throw ConfigError(fmt::format("invalid score distribution parameters ({}, {})", a, b));
  }
}

FeatureProfile FeatureProfile::good(std::string name) {
  FeatureProfile p;
  p.name = std::move(name);
  return p;
}

FeatureProfile FeatureProfile::bad(std::string name) {
  FeatureProfile p;
  p.name = std::move(name);
  p.positive = ScoreDistribution::beta(2, 2);
  p.negative = ScoreDistribution::beta(2, 2);
  return p;
}

void SynthSpec::validate() const {
  if (num_queries < 1 || gallery_size < 1) {
    throw ConfigError("synthetic spec needs at least one query and one gallery item");
  }
  if (!irrelevant && (relevant_per_query < 1 || relevant_per_query >= gallery_size)) {
    throw ConfigError(fmt::format("relevant_per_query must be in [1, gallery_size), got {}",
                                  relevant_per_query));
  }
  if (features.empty()) {
    throw ConfigError("synthetic spec has no features");
  }
  for (const auto& f : features) {
    if (f.name.empty()) throw ConfigError("feature name must not be empty");
    f.positive.validate();
    f.negative.validate();
    if (f.uninformative) f.uninformative->validate();
    if (f.informative_rate < 0 || f.informative_rate > 1) {
      throw ConfigError("informative_rate must be in [0, 1]");
    }
    if (f.tail_jitter < 0) throw ConfigError("tail_jitter must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string family_name(ScoreDistribution::Family f) {
  switch (f) {
    case ScoreDistribution::Family::beta: return "beta";
    case ScoreDistribution::Family::uniform: return "uniform";
    case ScoreDistribution::Family::point: return "point";
  }
  return "beta";
}

nlohmann::json dist_to_json(const ScoreDistribution& d) {
  return {{"family", family_name(d.family)}, {"a", d.a}, {"b", d.b}};
}

ScoreDistribution dist_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"family", "a", "b"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError(fmt::format("unknown distribution key '{}'", k));
    }
  }
  ScoreDistribution d;
  const auto fam = j.at("family").get<std::string>();
  if (fam == "beta") d.family = ScoreDistribution::Family::beta;
  else if (fam == "uniform") d.family = ScoreDistribution::Family::uniform;
  else if (fam == "point") d.family = ScoreDistribution::Family::point;
  else throw ConfigError(fmt::format("unknown distribution family '{}'", fam));
  d.a = j.at("a").get<double>();
  d.b = j.value("b", 0.0);
  return d;
}

template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const SynthSpec& spec) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : spec.features) {
    features.push_back({{"name", f.name},
                        {"positive", dist_to_json(f.positive)},
                        {"negative", dist_to_json(f.negative)},
                        {"informative_rate", f.informative_rate},
                        {"group", f.group},
                        {"tail_jitter", f.tail_jitter}});
    if (f.uninformative) features.back()["uninformative"] = dist_to_json(*f.uninformative);
  }
  j = {{"num_queries", spec.num_queries},
       {"gallery_size", spec.gallery_size},
       {"relevant_per_query", spec.relevant_per_query},
       {"seed", spec.seed},
       {"correlation_seed", spec.correlation_seed},
       {"irrelevant", spec.irrelevant},
       {"features", features}};
}

void from_json(const nlohmann::json& j, SynthSpec& spec) {
  static const std::vector<std::string> top{"num_queries", "gallery_size", "relevant_per_query",
                                            "seed",        "correlation_seed", "irrelevant",
                                            "features"};
  static const std::vector<std::string> feat{"name",  "positive", "negative", "informative_rate",
                                             "group", "tail_jitter", "uninformative"};
  try {
    for (const auto& [k, v] : j.items()) {
      if (std::find(top.begin(), top.end(), k) == top.end()) {
        throw ConfigError(fmt::format("unknown synth spec key '{}'", k));
      }
    }
    spec = SynthSpec{};
    read_optional(j, "num_queries", spec.num_queries);
    read_optional(j, "gallery_size", spec.gallery_size);
    read_optional(j, "relevant_per_query", spec.relevant_per_query);
    read_optional(j, "seed", spec.seed);
    read_optional(j, "correlation_seed", spec.correlation_seed);
    read_optional(j, "irrelevant", spec.irrelevant);
    for (const auto& jf : j.at("features")) {
      for (const auto& [k, v] : jf.items()) {
        if (std::find(feat.begin(), feat.end(), k) == feat.end()) {
          throw ConfigError(fmt::format("unknown synth feature key '{}'", k));
        }
      }
      FeatureProfile f = FeatureProfile::good(jf.at("name").get<std::string>());
      if (jf.contains("positive")) f.positive = dist_from_json(jf.at("positive"));
      if (jf.contains("negative")) f.negative = dist_from_json(jf.at("negative"));
      read_optional(jf, "informative_rate", f.informative_rate);
      read_optional(jf, "group", f.group);
      read_optional(jf, "tail_jitter", f.tail_jitter);
      if (jf.contains("uninformative")) f.uninformative = dist_from_json(jf.at("uninformative"));
      spec.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed synth spec: {}", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::vector<std::string> make_ids(char prefix, std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  const int width = std::max<int>(5, static_cast<int>(std::to_string(n).size()));
  for (std::size_t i = 0; i < n; ++i) ids.push_back(fmt::format("{}{:0{}}", prefix, i, width));
  return ids;
}

constexpr std::uint64_t kLayoutStream = 0x6c61796f7574ULL;
constexpr std::uint64_t kRandomFeatureStream = 0x72616e64ULL;

void fill_feature(ScoreTable& table, const FeatureProfile& profile, const Relevance& relevance,
                  const std::vector<char>& informative, Engine& engine) {
  const std::size_t ng = table.num_gallery();
  std::vector<char> is_pos(ng, 0);
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    const double shape =
        profile.tail_jitter > 0
            ? std::exp(uniform_real(engine, -profile.tail_jitter, profile.tail_jitter))
            : 1.0;
    for (std::size_t g : relevance[q]) is_pos[g] = 1;
    auto row = table.row(q);
    if (!informative[q] && profile.uninformative) {
      for (auto& x : row) x = profile.uninformative->sample(engine);
      for (std::size_t g : relevance[q]) is_pos[g] = 0;
      continue;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const bool use_positive = is_pos[g] && informative[q];
      row[g] = use_positive ? profile.positive.sample(engine)
                            : profile.negative.sample(engine, shape);
    }
    for (std::size_t g : relevance[q]) is_pos[g] = 0;
  }
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData data;
  const auto qids = make_ids('q', spec.num_queries);
  const auto gids = make_ids('g', spec.gallery_size);

  data.qrels.mode = QrelsMode::pairs;
  data.relevance.assign(spec.num_queries, {});
  if (!spec.irrelevant) {
    Engine layout(derive_seed(spec.seed, kLayoutStream));
    for (std::size_t q = 0; q < spec.num_queries; ++q) {
      auto rel = sample_without_replacement(layout, spec.gallery_size, spec.relevant_per_query);
      std::sort(rel.begin(), rel.end());
      for (std::size_t g : rel) data.qrels.relevant[qids[q]].insert(gids[g]);
      data.relevance[q] = std::move(rel);
    }
  }

  // Per-query informative draws; a shared group reuses the same stream.
  std::map<std::string, std::vector<char>> group_draws;
  auto draw = [&](const FeatureProfile& f, std::size_t index) {
    Engine engine(derive_seed(spec.correlation_seed,
                              f.group.empty() ? index + 1 : stable_hash(f.group)));
    std::vector<char> out(spec.num_queries);
    for (auto& x : out) x = uniform_real(engine, 0.0, 1.0) < f.informative_rate;
    return out;
  };

  for (std::size_t i = 0; i < spec.features.size(); ++i) {
    const auto& f = spec.features[i];
    std::vector<char> informative;
    if (f.group.empty()) {
      informative = draw(f, i);
    } else {
      auto it = group_draws.find(f.group);
      if (it == group_draws.end()) it = group_draws.emplace(f.group, draw(f, i)).first;
      informative = it->second;
    }
    ScoreTable table(f.name, qids, gids);
    Engine engine(derive_seed(spec.seed, i + 1));
    fill_feature(table, f, data.relevance, informative, engine);
    data.tables.push_back(std::move(table));
    data.informative.push_back(std::move(informative));
  }
  return data;
}

void add_random_features(std::vector<ScoreTable>& tables, std::size_t count, std::uint64_t seed) {
  if (count == 0) return;
  if (tables.empty()) throw DataError("cannot add random features to an empty feature set");
  const std::vector<std::string> query_ids = tables.front().query_ids;
  const std::vector<std::string> gallery_ids = tables.front().gallery_ids;
  const Relevance none(query_ids.size());
  const std::vector<char> informative(query_ids.size(), 0);
  const std::size_t start = tables.size();
  for (std::size_t i = 0; i < count; ++i) {
    ScoreTable table(fmt::format("random{:02}", start + i), query_ids, gallery_ids);
    Engine engine(derive_seed(derive_seed(seed, kRandomFeatureStream), start + i));
    fill_feature(table, FeatureProfile::bad(table.feature_id), none, informative, engine);
    tables.push_back(std::move(table));
  }
}

}  // namespace qafuse
