#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qafuse/eval.hpp"
#include "qafuse/fusion.hpp"
#include "qafuse/sqaf.hpp"

namespace qafuse::cli {

enum class KeyKind { string, integer, real, boolean, list };

struct KeySpec {
  std::string_view name;
  KeyKind kind;
  std::string_view fallback;  // default, in JSON syntax
  std::string_view flags;     // CLI11 option names
  std::string_view help;
  std::string_view commands;  // space-separated subcommands exposing the flag
};

/// Every configuration key, in output order.
std::span<const KeySpec> key_table();

/// Flat key/value run configuration. Layers are merged in order defaults,
/// config file, command-line flags; unknown keys and mistyped values are
/// ConfigErrors.
class RunConfig {
 public:
  RunConfig();

  void merge_file(const std::filesystem::path& path);
  void merge(const nlohmann::json& doc, std::string_view origin);
  /// `raw` holds the flag's text (one entry per value for list keys).
  void set_from_text(std::string_view key, const std::vector<std::string>& raw);

  const nlohmann::ordered_json& document() const { return doc_; }
  /// True once a config file or flag has set `key`.
  bool is_set(std::string_view key) const;
  /// Single-line JSON echo of the resolved configuration.
  std::string echo() const;

  std::string str(std::string_view key) const;
  long long integer(std::string_view key) const;
  std::size_t count(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::vector<std::string> list(std::string_view key) const;

  /// Throws ConfigError naming the key if a path key is empty.
  std::string required(std::string_view key) const;
  std::vector<std::string> required_list(std::string_view key) const;

  QafConfig qaf() const;
  MatchConfig match() const;
  TrainConfig train() const;
  FusionRule rule() const;
  Metric metric() const;
  QrelsMode qrels_mode() const;

 private:
  nlohmann::ordered_json doc_;
  std::vector<std::string> set_keys_;
};

}  // namespace qafuse::cli
