#include "qafuse/score_table.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "qafuse/error.hpp"

namespace qafuse {

namespace {

struct PendingTable {
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
  std::unordered_map<std::string, std::size_t> query_index;
  std::unordered_map<std::string, std::size_t> gallery_index;
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
};

std::size_t intern(const std::string& id, std::vector<std::string>& ids,
                   std::unordered_map<std::string, std::size_t>& index) {
  auto [it, inserted] = index.try_emplace(id, ids.size());
  if (inserted) {
    ids.push_back(id);
  }
  return it->second;
}

std::unordered_map<std::string, std::size_t> index_of(std::span<const std::string> ids,
                                                      const char* what) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) {
      throw DataError(fmt::format("duplicate {} id '{}'", what, ids[i]));
    }
  }
  return index;
}

}  // namespace

ScoreTable::ScoreTable(std::string feature, std::vector<std::string> queries,
                       std::vector<std::string> gallery)
    : feature_id(std::move(feature)),
      query_ids(std::move(queries)),
      gallery_ids(std::move(gallery)),
      scores(query_ids.size() * gallery_ids.size(), 0.0) {}

void ScoreTable::validate() const {
  if (scores.size() != num_queries() * num_gallery()) {
    throw DataError(fmt::format("feature '{}': score matrix has {} entries, expected {} x {}",
                                feature_id, scores.size(), num_queries(), num_gallery()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw DataError(fmt::format("feature '{}': non-finite score for query '{}', gallery '{}'",
                                  feature_id, query_ids[i / num_gallery()],
                                  gallery_ids[i % num_gallery()]));
    }
  }
}

std::vector<ScoreTable> read_score_tables(std::istream& in) {
  std::vector<std::string> feature_order;
  std::unordered_map<std::string, PendingTable> pending;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') {
      continue;
    }
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(fmt::format("line {}: {}", line_no, e.what()));
    }
    std::string feature, query, gallery;
    double score = 0.0;
    try {
      feature = record.at("feature").get<std::string>();
      query = record.at("query").get<std::string>();
      gallery = record.at("gallery").get<std::string>();
      score = record.at("score").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("line {}: {}", line_no, e.what()));
    }
    if (!std::isfinite(score)) {
      throw DataError(fmt::format("line {}: non-finite score", line_no));
    }

    auto [it, inserted] = pending.try_emplace(feature);
    if (inserted) {
      feature_order.push_back(feature);
    }
    PendingTable& table = it->second;
    const std::size_t q = intern(query, table.query_ids, table.query_index);
    const std::size_t g = intern(gallery, table.gallery_ids, table.gallery_index);
    if (!table.cells.emplace(std::pair{q, g}, score).second) {
      throw DataError(fmt::format("line {}: duplicate entry for feature '{}', query '{}', gallery '{}'",
                                  line_no, feature, query, gallery));
    }
  }

  std::vector<ScoreTable> tables;
  tables.reserve(feature_order.size());
  for (const auto& feature : feature_order) {
    PendingTable& p = pending.at(feature);
    const std::size_t expected = p.query_ids.size() * p.gallery_ids.size();
    if (p.cells.size() != expected) {
      throw DataError(fmt::format("feature '{}': ragged coverage, {} of {} query/gallery pairs present",
                                  feature, p.cells.size(), expected));
    }
    ScoreTable table(feature, std::move(p.query_ids), std::move(p.gallery_ids));
    for (const auto& [key, score] : p.cells) {
      table.at(key.first, key.second) = score;
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

std::vector<ScoreTable> load_score_tables(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open score file '{}'", path.string()));
  }
  return read_score_tables(in);
}

void write_score_table(std::ostream& out, const ScoreTable& table) {
  table.validate();
  const std::string feature = nlohmann::json(table.feature_id).dump();
  std::vector<std::string> gallery;
  gallery.reserve(table.num_gallery());
  for (const auto& id : table.gallery_ids) {
    gallery.push_back(nlohmann::json(id).dump());
  }
  fmt::memory_buffer buf;
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    const std::string query = nlohmann::json(table.query_ids[q]).dump();
    for (std::size_t g = 0; g < table.num_gallery(); ++g) {
      buf.clear();
      fmt::format_to(std::back_inserter(buf),
                     "{{\"feature\":{},\"query\":{},\"gallery\":{},\"score\":{}}}\n", feature,
                     query, gallery[g], format_real(table.at(q, g)));
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  }
}

ScoreTable transpose(const ScoreTable& table) {
  ScoreTable out(table.feature_id, table.gallery_ids, table.query_ids);
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    for (std::size_t g = 0; g < table.num_gallery(); ++g) out.at(g, q) = table.at(q, g);
  }
  return out;
}

ScoreTable align_to(const ScoreTable& table, std::span<const std::string> query_ids,
                    std::span<const std::string> gallery_ids) {
  if (table.num_queries() != query_ids.size() || table.num_gallery() != gallery_ids.size()) {
    throw DataError(fmt::format("feature '{}': query/gallery universe differs ({}x{} vs {}x{})",
                                table.feature_id, table.num_queries(), table.num_gallery(),
                                query_ids.size(), gallery_ids.size()));
  }
  const auto qidx = index_of(table.query_ids, "query");
  const auto gidx = index_of(table.gallery_ids, "gallery");
  std::vector<std::size_t> qmap, gmap;
  for (const auto& id : query_ids) {
    auto it = qidx.find(id);
    if (it == qidx.end()) {
      throw DataError(fmt::format("feature '{}' has no query '{}'", table.feature_id, id));
    }
    qmap.push_back(it->second);
  }
  for (const auto& id : gallery_ids) {
    auto it = gidx.find(id);
    if (it == gidx.end()) {
      throw DataError(fmt::format("feature '{}' has no gallery item '{}'", table.feature_id, id));
    }
    gmap.push_back(it->second);
  }
  ScoreTable out(table.feature_id, {query_ids.begin(), query_ids.end()},
                 {gallery_ids.begin(), gallery_ids.end()});
  for (std::size_t q = 0; q < qmap.size(); ++q) {
    for (std::size_t g = 0; g < gmap.size(); ++g) {
      out.at(q, g) = table.at(qmap[q], gmap[g]);
    }
  }
  return out;
}

std::vector<ScoreTable> align_tables(std::vector<ScoreTable> tables) {
  if (tables.size() < 2) {
    return tables;
  }
  std::vector<ScoreTable> out;
  out.reserve(tables.size());
  out.push_back(std::move(tables.front()));
  for (std::size_t i = 1; i < tables.size(); ++i) {
    if (tables[i].query_ids == out.front().query_ids &&
        tables[i].gallery_ids == out.front().gallery_ids) {
      out.push_back(std::move(tables[i]));
    } else {
      out.push_back(align_to(tables[i], out.front().query_ids, out.front().gallery_ids));
    }
  }
  return out;
}

std::string format_real(double value) { return fmt::format("{:.17g}", value); }

}  // namespace qafuse
