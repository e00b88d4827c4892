#include "cli/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "qafuse/error.hpp"

namespace qafuse::cli {

namespace {

// clang-format off
constexpr std::array kKeys{
  KeySpec{"spec", KeyKind::string, R"("")", "--spec", "synthetic benchmark spec (JSON)", "synth"},
  KeySpec{"out_dir", KeyKind::string, R"("")", "--out-dir", "directory for generated files", "synth"},
  KeySpec{"scores", KeyKind::list, "[]", "--scores", "score table files (JSONL)", "build-ref fuse train compare"},
  KeySpec{"feature", KeyKind::string, R"("")", "--feature", "feature id to use from the score files", "build-ref"},
  KeySpec{"codebooks", KeyKind::list, "[]", "--codebooks", "reference codebooks, one per feature", "fuse compare"},
  KeySpec{"model", KeyKind::string, R"("")", "--model", "trained weight model; switches fuse to the learned weights", "fuse compare"},
  KeySpec{"ranking", KeyKind::string, R"("")", "--ranking", "ranking file written by fuse", "eval"},
  KeySpec{"qrels", KeyKind::string, R"("")", "--qrels", "relevance judgements", "train eval compare"},
  KeySpec{"qrels_mode", KeyKind::string, R"("pairs")", "--qrels-mode", "pairs | identity", "train eval compare"},
  KeySpec{"exclude_self", KeyKind::boolean, "false", "--exclude-self", "a gallery item with the query's id is never relevant", "train eval compare"},
  KeySpec{"out", KeyKind::string, R"("")", "--out,-o", "primary output file", "build-ref fuse train eval compare"},
  KeySpec{"weights_out", KeyKind::string, R"("")", "--weights-out", "per-query weights file (default: <out>.weights)", "fuse"},
  KeySpec{"detail_out", KeyKind::string, R"("")", "--detail-out", "secondary output (eval: per-query CSV, compare: JSON, train: loss CSV)", "train eval compare"},
  KeySpec{"swap_average", KeyKind::boolean, "false", "--swap-average", "also run with query and gallery sets exchanged and report the mean of both", "compare"},
  KeySpec{"methods", KeyKind::list, R"(["single-feature","uniform","qaf","rank-aggregation","grid-search"])", "--methods", "single-feature uniform qaf sqaf rank-aggregation grid-search", "compare"},
  KeySpec{"rule", KeyKind::string, R"("product")", "--rule", "product | sum", "fuse compare"},
  KeySpec{"metric", KeyKind::string, R"("map")", "--metric", "grid-search objective: map | rank1 | ns", "compare"},
  KeySpec{"grid_step", KeyKind::real, "0.1", "--grid-step", "grid-search weight step", "compare"},
  KeySpec{"match_method", KeyKind::string, R"("knn")", "--match", "reference matching: knn | nearest", "fuse compare"},
  KeySpec{"u", KeyKind::integer, "1", "--u", "first rank of the matching segment (1-based)", "fuse compare"},
  KeySpec{"v", KeyKind::integer, "400", "--v", "last rank of the matching segment (inclusive)", "fuse compare"},
  KeySpec{"k", KeyKind::integer, "5", "--k", "neighbours averaged by knn matching", "fuse compare"},
  KeySpec{"curve_len", KeyKind::integer, "1000", "--curve-len,--len", "down-sampled curve length", "build-ref fuse compare"},
  KeySpec{"q", KeyKind::integer, "1000", "--q", "reference curves per codebook", "build-ref"},
  KeySpec{"ref_seed", KeyKind::integer, "0", "--ref-seed,--seed", "codebook sampling seed", "build-ref"},
  KeySpec{"provenance", KeyKind::string, R"("")", "--provenance", "note on the corpus the codebook came from", "build-ref"},
  KeySpec{"use_reference", KeyKind::boolean, "true", "--use-reference", "subtract the matched reference curve", "fuse compare"},
  KeySpec{"epsilon_area", KeyKind::real, "1e-06", "--epsilon-area", "floor on curve areas", "fuse compare"},
  KeySpec{"epsilon_score", KeyKind::real, "1e-06", "--epsilon-score", "floor on scores under the product rule", "fuse compare"},
  KeySpec{"stack_len", KeyKind::integer, "100", "--stack-len", "top-m curve prefix fed to the model", "train"},
  KeySpec{"margin", KeyKind::real, "1.0", "--margin", "loss margin d", "train"},
  KeySpec{"alpha", KeyKind::real, "2.0", "--alpha", "hard negatives per positive", "train"},
  KeySpec{"learning_rate", KeyKind::real, "0.01", "--learning-rate,--lr", "SGD step size", "train"},
  KeySpec{"epochs", KeyKind::integer, "50", "--epochs", "training epochs", "train"},
  KeySpec{"batch_size", KeyKind::integer, "16", "--batch-size", "queries per SGD step", "train"},
  KeySpec{"train_seed", KeyKind::integer, "0", "--train-seed,--seed", "initialisation and shuffling seed", "train"},
  KeySpec{"threads", KeyKind::integer, "1", "--threads", "worker threads for per-query work (0 = all cores)", "fuse compare"},
};
// clang-format on

const KeySpec& spec_for(std::string_view key) {
  auto it = std::find_if(kKeys.begin(), kKeys.end(), [&](const KeySpec& k) { return k.name == key; });
  if (it == kKeys.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return *it;
}

bool kind_matches(KeyKind kind, const nlohmann::json& v) {
  switch (kind) {
    case KeyKind::string:
      return v.is_string();
    case KeyKind::integer:
      return v.is_number_integer();
    case KeyKind::real:
      return v.is_number();
    case KeyKind::boolean:
      return v.is_boolean();
    case KeyKind::list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_string(); });
  }
  return false;
}

std::string_view kind_name(KeyKind kind) {
  switch (kind) {
    case KeyKind::string: return "a string";
    case KeyKind::integer: return "an integer";
    case KeyKind::real: return "a number";
    case KeyKind::boolean: return "a boolean";
    case KeyKind::list: return "a list of strings";
  }
  return "?";
}

}  // namespace

std::span<const KeySpec> key_table() { return kKeys; }

RunConfig::RunConfig() {
  for (const auto& k : kKeys) doc_[std::string(k.name)] = nlohmann::json::parse(k.fallback);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config file '{}': {}", path.string(), e.what()));
  }
  merge(doc, path.string());
}

void RunConfig::merge(const nlohmann::json& doc, std::string_view origin) {
  if (!doc.is_object()) throw ConfigError(fmt::format("{}: config must be a JSON object", origin));
  for (const auto& [key, value] : doc.items()) {
    const auto& spec = [&]() -> const KeySpec& {
      try {
        return spec_for(key);
      } catch (const ConfigError&) {
        throw ConfigError(fmt::format("{}: unknown config key '{}'", origin, key));
      }
    }();
    if (!kind_matches(spec.kind, value)) {
      throw ConfigError(fmt::format("{}: '{}' must be {}", origin, key, kind_name(spec.kind)));
    }
    set_keys_.push_back(key);
    if (spec.kind == KeyKind::real) {
      doc_[key] = value.get<double>();
    } else {
      doc_[key] = value;
    }
  }
}

void RunConfig::set_from_text(std::string_view key, const std::vector<std::string>& raw) {
  const auto& spec = spec_for(key);
  const std::string name(key);
  set_keys_.push_back(name);
  auto single = [&]() -> const std::string& {
    if (raw.size() != 1) throw ConfigError(fmt::format("--{} takes one value", name));
    return raw.front();
  };
  switch (spec.kind) {
    case KeyKind::string:
      doc_[name] = single();
      break;
    case KeyKind::integer: {
      const auto& s = single();
      long long v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ConfigError(fmt::format("'{}' expects an integer, got '{}'", name, s));
      }
      doc_[name] = v;
      break;
    }
    case KeyKind::real: {
      const auto& s = single();
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) {
        throw ConfigError(fmt::format("'{}' expects a number, got '{}'", name, s));
      }
      doc_[name] = v;
      break;
    }
    case KeyKind::boolean: {
      const auto& s = single();
      if (s == "true" || s == "1") doc_[name] = true;
      else if (s == "false" || s == "0") doc_[name] = false;
      else throw ConfigError(fmt::format("'{}' expects true or false, got '{}'", name, s));
      break;
    }
    case KeyKind::list:
      doc_[name] = raw;
      break;
  }
}

bool RunConfig::is_set(std::string_view key) const {
  return std::find(set_keys_.begin(), set_keys_.end(), key) != set_keys_.end();
}

std::string RunConfig::echo() const { return doc_.dump(); }

std::string RunConfig::str(std::string_view key) const {
  return doc_.at(std::string(key)).get<std::string>();
}

long long RunConfig::integer(std::string_view key) const {
  return doc_.at(std::string(key)).get<long long>();
}

std::size_t RunConfig::count(std::string_view key) const {
  const long long v = integer(key);
  if (v < 0) throw ConfigError(fmt::format("'{}' must be non-negative", key));
  return static_cast<std::size_t>(v);
}

double RunConfig::real(std::string_view key) const {
  return doc_.at(std::string(key)).get<double>();
}

bool RunConfig::flag(std::string_view key) const { return doc_.at(std::string(key)).get<bool>(); }

std::vector<std::string> RunConfig::list(std::string_view key) const {
  return doc_.at(std::string(key)).get<std::vector<std::string>>();
}

std::string RunConfig::required(std::string_view key) const {
  auto v = str(key);
  if (v.empty()) throw ConfigError(fmt::format("missing required '{}'", key));
  return v;
}

std::vector<std::string> RunConfig::required_list(std::string_view key) const {
  auto v = list(key);
  if (v.empty()) throw ConfigError(fmt::format("missing required '{}'", key));
  return v;
}

MatchConfig RunConfig::match() const {
  MatchConfig m;
  const auto method = str("match_method");
  if (method == "knn") {
    m.method = MatchMethod::knn_average;
    m.k = count("k");
  } else if (method == "nearest") {
    m.method = MatchMethod::nearest;
    m.k = 1;
  } else {
    throw ConfigError(fmt::format("unknown match method '{}' (expected knn or nearest)", method));
  }
  m.u = count("u");
  m.v = count("v");
  m.validate();
  return m;
}

QafConfig RunConfig::qaf() const {
  QafConfig c;
  c.match = match();
  c.rule = rule();
  c.epsilon_area = real("epsilon_area");
  c.epsilon_score = real("epsilon_score");
  c.curve_len = count("curve_len");
  c.use_reference = flag("use_reference");
  c.validate();
  return c;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.margin = real("margin");
  t.alpha = real("alpha");
  t.learning_rate = real("learning_rate");
  t.epochs = count("epochs");
  t.batch_size = count("batch_size");
  t.seed = static_cast<std::uint64_t>(integer("train_seed"));
  t.validate();
  return t;
}

FusionRule RunConfig::rule() const { return parse_fusion_rule(str("rule")); }

Metric RunConfig::metric() const { return parse_metric(str("metric")); }

QrelsMode RunConfig::qrels_mode() const { return parse_qrels_mode(str("qrels_mode")); }

}  // namespace qafuse::cli
