#include "qafuse/reference.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "qafuse/error.hpp"
#include "qafuse/random.hpp"

namespace qafuse {

void ReferenceCodebook::validate() const {
  if (curves.empty()) {
    throw DataError(fmt::format("codebook for feature '{}' is empty", feature_id));
  }
  for (std::size_t h = 0; h < curves.size(); ++h) {
    const auto& c = curves[h];
    if (c.size() != curve_len) {
      throw DataError(fmt::format("codebook '{}': curve {} has length {}, expected {}", feature_id,
                                  h, c.size(), curve_len));
    }
    if (std::adjacent_find(c.begin(), c.end(), std::less<>{}) != c.end()) {
      throw DataError(fmt::format("codebook '{}': curve {} is not non-increasing", feature_id, h));
    }
  }
}

void MatchConfig::validate() const {
  if (u < 1 || v <= u) {
    throw ConfigError(fmt::format("match segment needs 1 <= u < v, got u={} v={}", u, v));
  }
  if (k < 1) {
    throw ConfigError("match k must be >= 1");
  }
  if (method == MatchMethod::nearest && k != 1) {
    throw ConfigError(fmt::format("nearest matching uses k=1, got k={}", k));
  }
}

MatchConfig MatchConfig::clamped(std::size_t curve_len) const {
  MatchConfig out = *this;
  out.v = std::min(v, curve_len);
  return out;
}

ReferenceCodebook build_codebook(const ScoreTable& irrelevant, std::size_t num_queries,
                                 std::size_t curve_len, std::uint64_t seed,
                                 std::string provenance) {
  irrelevant.validate();
  if (num_queries < 1) {
    throw DataError("codebook needs at least one reference query");
  }
  if (num_queries > irrelevant.num_queries()) {
    throw DataError(fmt::format("requested {} reference queries but table '{}' has only {}",
                                num_queries, irrelevant.feature_id, irrelevant.num_queries()));
  }
  if (curve_len < 2 || curve_len > irrelevant.num_gallery()) {
    throw DataError(fmt::format("reference length {} must be in [2, gallery size {}]", curve_len,
                                irrelevant.num_gallery()));
  }

  Engine engine(seed);
  std::vector<std::size_t> rows =
      sample_without_replacement(engine, irrelevant.num_queries(), num_queries);
  std::sort(rows.begin(), rows.end());

  ReferenceCodebook codebook;
  codebook.feature_id = irrelevant.feature_id;
  codebook.curve_len = curve_len;
  codebook.seed = seed;
  codebook.provenance = std::move(provenance);
  codebook.curves.reserve(rows.size());
  for (std::size_t r : rows) {
    SortedCurve sorted = sort_descending(irrelevant.row(r));
    codebook.curves.push_back(downsample(sorted.values, curve_len));
  }
  return codebook;
}

std::vector<double> match_reference(std::span<const double> curve,
                                    const ReferenceCodebook& codebook, const MatchConfig& cfg) {
  if (codebook.curves.empty()) {
    throw DataError("empty reference codebook");
  }
  if (curve.size() != codebook.curve_len) {
    throw DataError(fmt::format("curve length {} does not match codebook length {}", curve.size(),
                                codebook.curve_len));
  }
  const MatchConfig seg = cfg.clamped(codebook.curve_len);
  seg.validate();

  const std::size_t begin = seg.u - 1;
  const std::size_t end = seg.v;
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(codebook.size());
  for (std::size_t h = 0; h < codebook.size(); ++h) {
    const auto& ref = codebook.curves[h];
    double d2 = 0.0;
    for (std::size_t j = begin; j < end; ++j) {
      const double diff = curve[j] - ref[j];
      d2 += diff * diff;
    }
    dist.emplace_back(d2, h);
  }

  const std::size_t k =
      seg.method == MatchMethod::nearest ? 1 : std::min(seg.k, codebook.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  if (k == 1) {
    return codebook.curves[dist.front().second];
  }
  std::vector<double> mean(codebook.curve_len, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& ref = codebook.curves[dist[i].second];
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] += ref[j];
    }
  }
  for (double& x : mean) {
    x /= static_cast<double>(k);
  }
  return mean;
}

NormalizedCurve subtract_and_normalize(std::span<const double> curve,
                                       std::span<const double> reference) {
  if (curve.size() != reference.size()) {
    throw DataError(fmt::format("cannot subtract reference of length {} from curve of length {}",
                                reference.size(), curve.size()));
  }
  std::vector<double> residual(curve.size());
  for (std::size_t j = 0; j < curve.size(); ++j) {
    residual[j] = curve[j] - reference[j];
  }
  return min_max_normalize(residual);
}

void write_codebook(std::ostream& out, const ReferenceCodebook& codebook) {
  codebook.validate();
  nlohmann::ordered_json doc;
  doc["format"] = "qafuse-codebook-1";
  doc["feature_id"] = codebook.feature_id;
  doc["q"] = codebook.size();
  doc["curve_len"] = codebook.curve_len;
  doc["seed"] = codebook.seed;
  doc["provenance"] = codebook.provenance;
  doc["curves"] = codebook.curves;
  out << doc.dump() << '\n';
}

ReferenceCodebook read_codebook(std::istream& in) {
  ReferenceCodebook codebook;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format").get<std::string>() != "qafuse-codebook-1") {
      throw DataError("unsupported codebook format");
    }
    codebook.feature_id = doc.at("feature_id").get<std::string>();
    codebook.curve_len = doc.at("curve_len").get<std::size_t>();
    codebook.seed = doc.at("seed").get<std::uint64_t>();
    codebook.provenance = doc.at("provenance").get<std::string>();
    codebook.curves = doc.at("curves").get<std::vector<std::vector<double>>>();
    if (doc.at("q").get<std::size_t>() != codebook.curves.size()) {
      throw DataError("codebook curve count does not match its header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed codebook: {}", e.what()));
  }
  codebook.validate();
  return codebook;
}

void save_codebook(const std::filesystem::path& path, const ReferenceCodebook& codebook) {
  std::ofstream out(path);
  if (!out) {
    throw DataError(fmt::format("cannot write codebook '{}'", path.string()));
  }
  write_codebook(out, codebook);
}

ReferenceCodebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open codebook '{}'", path.string()));
  }
  return read_codebook(in);
}

}  // namespace qafuse
