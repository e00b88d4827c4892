#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qafuse {

/// Raw similarity scores of every gallery item to every query for a single
/// feature. Rows are queries, columns gallery items, stored row-major.
struct ScoreTable {
  std::string feature_id;
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
  std::vector<double> scores;

  ScoreTable() = default;
  /// Zero-filled table of the right shape.
  ScoreTable(std::string feature, std::vector<std::string> queries,
             std::vector<std::string> gallery);

  std::size_t num_queries() const { return query_ids.size(); }
  std::size_t num_gallery() const { return gallery_ids.size(); }

  std::span<const double> row(std::size_t q) const {
    return {scores.data() + q * num_gallery(), num_gallery()};
  }
  std::span<double> row(std::size_t q) {
    return {scores.data() + q * num_gallery(), num_gallery()};
  }
  double at(std::size_t q, std::size_t g) const { return scores[q * num_gallery() + g]; }
  double& at(std::size_t q, std::size_t g) { return scores[q * num_gallery() + g]; }

  /// Throws DataError if the matrix shape is wrong or a score is non-finite.
  void validate() const;
};

/// Parse JSON-lines records {"feature","query","gallery","score"}. One file
/// may hold several features; ids keep first-appearance order per feature.
/// Blank lines and lines starting with '#' are skipped.
std::vector<ScoreTable> read_score_tables(std::istream& in);
std::vector<ScoreTable> load_score_tables(const std::filesystem::path& path);

void write_score_table(std::ostream& out, const ScoreTable& table);

/// Reorder `table` to the given query/gallery order. Both id sets must match
/// exactly.
ScoreTable align_to(const ScoreTable& table, std::span<const std::string> query_ids,
                    std::span<const std::string> gallery_ids);

/// Check that all tables cover the same queries and gallery, then reorder
/// every table to the first one's id order.
std::vector<ScoreTable> align_tables(std::vector<ScoreTable> tables);

/// Query and gallery roles exchanged: out.at(g, q) == table.at(q, g).
ScoreTable transpose(const ScoreTable& table);

/// Shortest text that is still bit-stable: 17 significant digits.
std::string format_real(double value);

}  // namespace qafuse
