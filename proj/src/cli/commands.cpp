#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qafuse/error.hpp"
#include "qafuse/eval.hpp"
#include "qafuse/fusion.hpp"
#include "qafuse/reference.hpp"
#include "qafuse/score_table.hpp"
#include "qafuse/sqaf.hpp"
#include "qafuse/synth.hpp"

namespace qafuse::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw DataError(fmt::format("error writing '{}'", path.string()));
}

std::string header(const RunConfig& cfg, std::string_view what) {
  return fmt::format("# qafuse {} config={}\n", what, cfg.echo());
}

std::vector<ScoreTable> load_tables(const std::vector<std::string>& paths) {
  std::vector<ScoreTable> tables;
  for (const auto& p : paths) {
    for (auto& t : load_score_tables(p)) {
      for (const auto& seen : tables) {
        if (seen.feature_id == t.feature_id) {
          throw DataError(fmt::format("feature '{}' appears in more than one score file", t.feature_id));
        }
      }
      tables.push_back(std::move(t));
    }
  }
  if (tables.empty()) throw DataError("score files hold no feature");
  return align_tables(std::move(tables));
}

/// Codebooks reordered to the feature order of `tables`.
std::vector<ReferenceCodebook> load_codebooks(const std::vector<std::string>& paths,
                                              std::span<const ScoreTable> tables) {
  std::map<std::string, ReferenceCodebook> by_feature;
  for (const auto& p : paths) {
    auto cb = load_codebook(p);
    auto id = cb.feature_id;
    if (!by_feature.emplace(id, std::move(cb)).second) {
      throw DataError(fmt::format("two codebooks for feature '{}'", id));
    }
  }
  std::vector<ReferenceCodebook> out;
  for (const auto& t : tables) {
    auto it = by_feature.find(t.feature_id);
    if (it == by_feature.end()) {
      throw DataError(fmt::format("no codebook for feature '{}'", t.feature_id));
    }
    out.push_back(std::move(it->second));
    by_feature.erase(it);
  }
  if (!by_feature.empty()) {
    throw DataError(
        fmt::format("codebook for feature '{}' has no score table", by_feature.begin()->first));
  }
  return out;
}

Relevance load_relevance(const RunConfig& cfg, std::span<const std::string> qids,
                         std::span<const std::string> gids) {
  const auto qrels = load_qrels(cfg.required("qrels"), cfg.qrels_mode());
  return qrels.resolve(qids, gids, cfg.flag("exclude_self"));
}

std::vector<std::size_t> canonical_order(std::span<const std::string> ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  return order;
}

std::string sibling(const std::string& path, std::string_view ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p.string();
}

WeightEstimator constant_estimator(WeightVector w) {
  return [w = std::move(w)](std::span<const SortedCurve>, std::size_t) { return w; };
}

struct QafSetup {
  QafConfig qaf;
  std::vector<ReferenceCodebook> codebooks;
};

QafSetup qaf_setup(const RunConfig& cfg, std::span<const ScoreTable> tables) {
  QafSetup s;
  s.qaf = cfg.qaf();
  if (s.qaf.use_reference) {
    const auto paths = cfg.list("codebooks");
    if (paths.empty()) {
      throw ConfigError("qaf needs --codebooks (or --use-reference false)");
    }
    s.codebooks = load_codebooks(paths, tables);
  }
  check_qaf_inputs(tables, s.codebooks, s.qaf);
  return s;
}

// ---------------------------------------------------------------------------

void write_feature_file(const fs::path& path, const ScoreTable& table, const std::string& head) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << head;
  write_score_table(out, table);
  finish(out, path);
}

bool safe_file_stem(std::string_view name) {
  return !name.empty() && name != "." && name != ".." &&
         std::all_of(name.begin(), name.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
         });
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const auto spec_path = cfg.required("spec");
  std::ifstream in(spec_path);
  if (!in) throw ConfigError(fmt::format("cannot open synth spec '{}'", spec_path));
  SynthSpec spec;
  try {
    spec = nlohmann::json::parse(in).get<SynthSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("synth spec '{}': {}", spec_path, e.what()));
  }
  spec.validate();
  for (const auto& f : spec.features) {
    if (!safe_file_stem(f.name)) {
      throw ConfigError(fmt::format("feature name '{}' cannot be used as a file name", f.name));
    }
  }
  const fs::path dir = cfg.required("out_dir");
  const auto data = generate(spec);
  const std::string head = fmt::format("# qafuse synth config={} spec={}\n", cfg.echo(),
                                       nlohmann::json(spec).dump());
  for (const auto& t : data.tables) {
    write_feature_file(dir / (t.feature_id + ".jsonl"), t, head);
  }
  if (!spec.irrelevant) {
    const auto path = dir / "qrels.txt";
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << head;
    write_qrels(out, data.qrels);
    finish(out, path);
  }
  log << fmt::format("wrote {} feature file(s) to {}\n", data.tables.size(), dir.string());
}

void cmd_build_ref(const RunConfig& cfg, std::ostream& log) {
  auto tables = load_tables(cfg.required_list("scores"));
  const auto feature = cfg.str("feature");
  const ScoreTable* table = nullptr;
  if (feature.empty()) {
    if (tables.size() != 1) {
      throw ConfigError("score files hold several features; pick one with --feature");
    }
    table = &tables.front();
  } else {
    for (const auto& t : tables) {
      if (t.feature_id == feature) table = &t;
    }
    if (!table) throw DataError(fmt::format("feature '{}' not found in score files", feature));
  }
  const auto note = cfg.str("provenance");
  const auto provenance =
      note.empty() ? fmt::format("config={}", cfg.echo()) : fmt::format("{} config={}", note, cfg.echo());
  const auto cb = build_codebook(*table, cfg.count("q"), cfg.count("curve_len"),
                                 static_cast<std::uint64_t>(cfg.integer("ref_seed")), provenance);
  const auto out = cfg.required("out");
  save_codebook(out, cb);
  log << fmt::format("codebook for '{}': {} curves of length {} -> {}\n", cb.feature_id, cb.size(),
                     cb.curve_len, out);
}

void cmd_fuse(const RunConfig& cfg, std::ostream& log) {
  // Settle config problems before touching any data file.
  const auto out_path = cfg.required("out");
  const auto scores = cfg.required_list("scores");
  if (cfg.str("model").empty()) cfg.qaf();
  else if (cfg.is_set("rule")) cfg.rule();
  const auto tables = load_tables(scores);
  auto weights_path = cfg.str("weights_out");
  if (weights_path.empty()) weights_path = out_path + ".weights";

  const std::size_t threads = cfg.count("threads");
  std::vector<FusedQuery> fused;
  std::string method;
  if (const auto model_path = cfg.str("model"); !model_path.empty()) {
    const auto model = load_model(model_path);
    if (model.architecture().features != tables.size()) {
      throw DataError(fmt::format("model expects {} features, score files hold {}",
                                  model.architecture().features, tables.size()));
    }
    // Models are trained against sum-rule fusion.
    const FusionRule rule = cfg.is_set("rule") ? cfg.rule() : FusionRule::sum;
    fused = fuse_tables(tables, sqaf_estimator(model), rule, cfg.real("epsilon_score"), threads);
    method = "sqaf";
  } else {
    const auto setup = qaf_setup(cfg, tables);
    fused = fuse_tables(tables, qaf_estimator(setup.codebooks, setup.qaf), setup.qaf.rule,
                        setup.qaf.epsilon_score, threads);
    method = "qaf";
  }

  const auto& qids = tables.front().query_ids;
  const auto& gids = tables.front().gallery_ids;
  const auto order = canonical_order(qids);
  {
    auto out = open_out(out_path, std::ios::out | std::ios::binary);
    out << header(cfg, "ranking");
    out << "# query gallery fused_score rank\n";
    fmt::memory_buffer buf;
    for (auto q : order) {
      buf.clear();
      const auto& f = fused[q];
      for (std::size_t r = 0; r < f.ranking.size(); ++r) {
        const auto g = f.ranking[r];
        fmt::format_to(std::back_inserter(buf), "{} {} {} {}\n", qids[q], gids[g],
                       format_real(f.scores[g]), r + 1);
      }
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    finish(out, out_path);
  }
  {
    auto out = open_out(weights_path, std::ios::out | std::ios::binary);
    out << header(cfg, "weights");
    out << "# query";
    for (const auto& t : tables) out << ' ' << t.feature_id;
    out << '\n';
    for (auto q : order) {
      out << qids[q];
      for (double w : fused[q].weights.values()) out << ' ' << format_real(w);
      out << '\n';
    }
    finish(out, weights_path);
  }
  log << fmt::format("{} fusion of {} features over {} queries -> {}\n", method, tables.size(),
                     qids.size(), out_path);
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto out_path = cfg.required("out");
  const auto tc = cfg.train();
  const auto tables = load_tables(cfg.required_list("scores"));
  const auto relevance =
      load_relevance(cfg, tables.front().query_ids, tables.front().gallery_ids);
  const auto samples = make_training_samples(tables, relevance, cfg.count("stack_len"));
  Architecture arch;
  arch.features = tables.size();
  arch.length = cfg.count("stack_len");
  auto result = train(samples, tc, arch);
  result.model.provenance = fmt::format("config={}", cfg.echo());
  save_model(out_path, result.model);
  if (const auto detail = cfg.str("detail_out"); !detail.empty()) {
    auto out = open_out(detail, std::ios::out | std::ios::binary);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      out << e + 1 << ',' << format_real(result.epoch_loss[e]) << '\n';
    }
    finish(out, detail);
  }
  log << fmt::format("trained on {} queries ({} skipped without a match), final loss {} -> {}\n",
                     samples.size(), tables.front().num_queries() - samples.size(),
                     result.epoch_loss.empty() ? std::string("n/a")
                                               : format_real(result.epoch_loss.back()),
                     out_path);
}

namespace {

struct RankingFile {
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
  std::vector<std::vector<std::size_t>> rankings;
};

RankingFile read_ranking(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open ranking '{}'", path));
  RankingFile rf;
  std::map<std::string, std::size_t> gindex;
  std::map<std::string, std::size_t> qindex;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> entries;  // (rank, gallery)
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string q, g, score, extra;
    long long rank = 0;
    if (!(fields >> q >> g >> score >> rank) || (fields >> extra) || rank < 1) {
      throw DataError(fmt::format("{} line {}: expected 'query gallery score rank'", path, line_no));
    }
    auto [qi, qnew] = qindex.emplace(q, rf.query_ids.size());
    if (qnew) {
      rf.query_ids.push_back(q);
      entries.emplace_back();
    }
    auto [gi, gnew] = gindex.emplace(g, rf.gallery_ids.size());
    if (gnew) rf.gallery_ids.push_back(g);
    entries[qi->second].emplace_back(static_cast<std::size_t>(rank), gi->second);
  }
  if (rf.query_ids.empty()) throw DataError(fmt::format("ranking '{}' is empty", path));
  const std::size_t n = rf.gallery_ids.size();
  for (std::size_t q = 0; q < entries.size(); ++q) {
    auto& e = entries[q];
    std::sort(e.begin(), e.end());
    std::vector<char> seen(n, 0);
    bool ok = e.size() == n;
    for (std::size_t r = 0; ok && r < e.size(); ++r) {
      ok = e[r].first == r + 1 && !seen[e[r].second];
      seen[e[r].second] = 1;
    }
    if (!ok) {
      throw DataError(fmt::format("ranking for query '{}' is not a permutation of the {} gallery items",
                                  rf.query_ids[q], n));
    }
    std::vector<std::size_t> ranking;
    ranking.reserve(n);
    for (const auto& [r, g] : e) ranking.push_back(g);
    rf.rankings.push_back(std::move(ranking));
  }
  return rf;
}

nlohmann::ordered_json real_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::ordered_json summary_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["queries"] = r.query_ids.size();
  j["excluded"] = r.excluded;
  j["map"] = real_or_null(r.map);
  j["ns"] = real_or_null(r.ns_mean);
  j["rank1"] = real_or_null(r.rank1);
  return j;
}

std::string csv_real(double v) { return std::isnan(v) ? std::string() : format_real(v); }

}  // namespace

void cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const auto out_path = cfg.required("out");
  auto detail = cfg.str("detail_out");
  if (detail.empty()) detail = sibling(out_path, ".csv");
  if (detail == out_path) throw ConfigError("--detail-out must differ from --out");
  const auto rf = read_ranking(cfg.required("ranking"));
  const auto relevance = load_relevance(cfg, rf.query_ids, rf.gallery_ids);
  auto report = evaluate("ranking", rf.rankings, relevance, rf.query_ids);

  // Per-query rows in canonical order.
  const auto order = canonical_order(report.query_ids);
  {
    nlohmann::ordered_json j;
    j["config"] = cfg.document();
    j["summary"] = summary_json(report);
    auto out = open_out(out_path, std::ios::out | std::ios::binary);
    out << j.dump(2) << '\n';
    finish(out, out_path);
  }
  {
    auto out = open_out(detail, std::ios::out | std::ios::binary);
    out << header(cfg, "eval");
    out << "query,ap,ns,top1\n";
    for (auto i : order) {
      out << report.query_ids[i] << ',' << format_real(report.ap[i]) << ','
          << csv_real(report.ns[i]) << ',' << int(report.top1[i]) << '\n';
    }
    finish(out, detail);
  }
  log << fmt::format("mAP {} rank-1 {} over {} queries ({} without relevant items)\n",
                     format_real(report.map), format_real(report.rank1), report.query_ids.size(),
                     report.excluded);
}

void cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const auto out_path = cfg.required("out");
  auto detail = cfg.str("detail_out");
  if (detail.empty()) detail = sibling(out_path, ".json");
  if (detail == out_path) throw ConfigError("--detail-out must differ from --out");

  const auto methods = cfg.required_list("methods");
  static const std::vector<std::string> known{"single-feature", "uniform",          "qaf",
                                              "sqaf",           "rank-aggregation", "grid-search"};
  for (const auto& m : methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError(fmt::format("unknown method '{}'", m));
    }
  }
  // Fail on missing artifacts before any work.
  auto wants = [&](std::string_view m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  };
  if (wants("sqaf") && cfg.str("model").empty()) throw ConfigError("method sqaf needs --model");
  cfg.rule();
  if (wants("qaf")) cfg.qaf();
  if (wants("grid-search")) cfg.metric();

  const auto tables = load_tables(cfg.required_list("scores"));
  const auto qrels = load_qrels(cfg.required("qrels"), cfg.qrels_mode());
  const bool exclude_self = cfg.flag("exclude_self");
  const FusionRule rule = cfg.rule();
  const double eps = cfg.real("epsilon_score");
  const std::size_t threads = cfg.count("threads");
  auto weights_json = [&](const WeightVector& w) {
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < tables.size(); ++i) j[tables[i].feature_id] = w[i];
    return j;
  };

  struct Run {
    std::vector<MetricReport> reports;
    std::vector<nlohmann::ordered_json> extras;
  };
  auto run_methods = [&](const std::vector<ScoreTable>& tables, const Qrels& qrels) {
    const auto& qids = tables.front().query_ids;
    const auto relevance = qrels.resolve(qids, tables.front().gallery_ids, exclude_self);
    Run run;
    auto add = [&](MetricReport r, nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
      run.reports.push_back(std::move(r));
      run.extras.push_back(std::move(extra));
    };
    for (const auto& m : methods) {
      if (m == "single-feature") {
        for (std::size_t i = 0; i < tables.size(); ++i) {
          std::vector<double> one_hot(tables.size(), 0.0);
          one_hot[i] = 1.0;
          auto fused = fuse_tables(tables, constant_estimator(WeightVector(one_hot)),
                                   FusionRule::sum, eps, threads);
          add(evaluate("single:" + tables[i].feature_id, fused, relevance, qids));
        }
      } else if (m == "uniform") {
        auto fused = fuse_tables(tables, constant_estimator(WeightVector::uniform(tables.size())),
                                 rule, eps, threads);
        add(evaluate(m, fused, relevance, qids));
      } else if (m == "qaf") {
        const auto setup = qaf_setup(cfg, tables);
        auto fused =
            fuse_tables(tables, qaf_estimator(setup.codebooks, setup.qaf), rule, eps, threads);
        add(evaluate(m, fused, relevance, qids));
      } else if (m == "sqaf") {
        const auto model = load_model(cfg.str("model"));
        if (model.architecture().features != tables.size()) {
          throw DataError(fmt::format("model expects {} features, score files hold {}",
                                      model.architecture().features, tables.size()));
        }
        auto fused = fuse_tables(tables, sqaf_estimator(model), FusionRule::sum, eps, threads);
        add(evaluate(m, fused, relevance, qids));
      } else if (m == "rank-aggregation") {
        std::vector<std::vector<std::size_t>> merged(qids.size());
        for (std::size_t q = 0; q < qids.size(); ++q) {
          std::vector<std::vector<std::size_t>> lists;
          for (const auto& t : tables) lists.push_back(sort_descending(t.row(q)).order);
          merged[q] = rank_aggregation(lists);
        }
        add(evaluate(m, merged, relevance, qids));
      } else if (m == "grid-search") {
        const auto g =
            global_grid_search(tables, relevance, rule, cfg.real("grid_step"), cfg.metric(), eps);
        auto fused = fuse_tables(tables, constant_estimator(g.weights), rule, eps, threads);
        nlohmann::ordered_json extra;
        extra["weights"] = weights_json(g.weights);
        extra["grid_points"] = g.points;
        add(evaluate(m, fused, relevance, qids), std::move(extra));
      }
    }
    return run;
  };

  auto [reports, extras] = run_methods(tables, qrels);
  if (cfg.flag("swap_average")) {
    // Exchange query and gallery sets, rerun everything, report the mean.
    std::vector<ScoreTable> flipped;
    for (const auto& t : tables) flipped.push_back(transpose(t));
    auto back = run_methods(flipped, qrels.swapped());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      nlohmann::ordered_json extra;
      extra["forward"] = summary_json(reports[i]);
      extra["swapped"] = summary_json(back.reports[i]);
      for (const auto& [k, v] : extras[i].items()) extra["forward"][k] = v;
      for (const auto& [k, v] : back.extras[i].items()) extra["swapped"][k] = v;
      reports[i] = average_directions(reports[i], back.reports[i]);
      extras[i] = std::move(extra);
    }
  }

  {
    auto out = open_out(out_path, std::ios::out | std::ios::binary);
    out << header(cfg, "compare");
    out << "method,map,ns,rank1,queries,excluded\n";
    for (const auto& r : reports) {
      out << r.method << ',' << format_real(r.map) << ',' << csv_real(r.ns_mean) << ','
          << format_real(r.rank1) << ',' << r.query_ids.size() << ',' << r.excluded << '\n';
    }
    finish(out, out_path);
  }
  {
    nlohmann::ordered_json j;
    j["config"] = cfg.document();
    j["methods"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      auto row = summary_json(reports[i]);
      for (const auto& [k, v] : extras[i].items()) row[k] = v;
      j["methods"].push_back(std::move(row));
    }
    auto out = open_out(detail, std::ios::out | std::ios::binary);
    out << j.dump(2) << '\n';
    finish(out, detail);
  }
  for (const auto& r : reports) {
    log << fmt::format("{:<24} mAP {:.4f}  rank-1 {:.4f}\n", r.method, r.map, r.rank1);
  }
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query-adaptive late fusion of retrieval scores", "qafuse"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "qafuse 1.0.0");

  struct Command {
    std::string name;
    std::string help;
    void (*fn)(const RunConfig&, std::ostream&);
  };
  const std::vector<Command> commands{
      {"synth", "generate a synthetic benchmark (score files and qrels)", cmd_synth},
      {"build-ref", "build a reference codebook from an irrelevant corpus", cmd_build_ref},
      {"fuse", "fuse score files with query-adaptive weights and write rankings", cmd_fuse},
      {"train", "train the learned weight model", cmd_train},
      {"eval", "score a ranking file against qrels", cmd_eval},
      {"compare", "evaluate several fusion methods on the same inputs", cmd_compare},
  };

  std::map<std::string, std::vector<std::string>> values;  // "<command>/<key>" -> raw
  std::map<std::string, std::string> config_files;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> options;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    subs[c.name] = sub;
    sub->add_option("--config,-c", config_files[c.name],
                    "JSON config file; flags given on the command line take precedence");
    for (const auto& k : key_table()) {
      std::istringstream cmds{std::string(k.commands)};
      std::string name;
      bool exposed = false;
      while (cmds >> name) exposed = exposed || name == c.name;
      if (!exposed) continue;
      auto& slot = values[c.name + "/" + std::string(k.name)];
      auto help = fmt::format("{} (default {})", k.help, k.fallback);
      CLI::Option* opt = sub->add_option(std::string(k.flags), slot, help);
      if (k.kind == KeyKind::list) {
        opt->expected(1, CLI::detail::expected_max_vector_size);
      } else if (k.kind == KeyKind::boolean) {
        opt->expected(0, 1);
      } else {
        opt->expected(1);
      }
      options[c.name].emplace_back(std::string(k.name), opt);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& c : commands) {
      if (!subs[c.name]->parsed()) continue;
      RunConfig cfg;
      if (!config_files[c.name].empty()) cfg.merge_file(config_files[c.name]);
      for (const auto& [key, opt] : options[c.name]) {
        if (opt->count() == 0) continue;
        auto raw = values[c.name + "/" + key];
        // A bare boolean flag arrives with no value or a single empty one.
        if (raw.empty() || (raw.size() == 1 && raw.front().empty())) raw = {"true"};
        cfg.set_from_text(key, raw);
      }
      c.fn(cfg, out);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::logic_error& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace qafuse::cli
