// quantgym command-line driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "quantgym/quantgym.hpp"

namespace fs = std::filesystem;
using namespace quantgym;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string report_dir;
};

Config load_config(const Options& o) {
  Config cfg = o.config_path.empty() ? Config{} : Config::load(o.config_path);
  for (const auto& s : o.overrides) cfg.apply_override(s);
  return cfg;
}

fs::path output_root(const Options& o, const Config& cfg) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("QUANTGYM_OUT"); env && *env) return env;
  return cfg.str("run", "output_dir", "out");
}

std::string file_digest(const std::string& path) {
  return util::hex64(util::fnv1a(util::read_file(path)));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg, const Options& o,
                    const std::vector<std::string>& inputs) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", p}, {"fnv1a", file_digest(p)}});
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  json m = {{"command", command},
            {"config", cfg.canonical()},
            {"config_hash", util::hex64(util::fnv1a(cfg.canonical()))},
            {"config_file", o.config_path},
            {"seed", run_seed(cfg)},
            {"inputs", in},
            {"created_utc", format_timestamp(Timestamp{now.time_since_epoch()})}};
  write_json(dir / "manifest.json", m);
}

fs::path command_dir(const Options& o, const Config& cfg, const std::string& name) {
  auto dir = output_root(o, cfg) / name;
  fs::create_directories(dir);
  return dir;
}

int cmd_ingest(const Options& o) {
  auto cfg = load_config(o);
  auto d = load_bars(cfg);
  auto dir = command_dir(o, cfg, "ingest");
  write_csv(d.cleaned.table, (dir / "bars.csv").string());
  std::size_t synthetic = 0;
  for (const auto& b : d.cleaned.table.bars()) synthetic += b.synthetic;
  write_json(dir / "ingest.json", {{"tickers", d.cleaned.table.tickers()},
                                   {"raw_steps", d.raw.num_steps()},
                                   {"steps", d.cleaned.table.num_steps()},
                                   {"dropped", d.cleaned.dropped},
                                   {"filled_bars", synthetic}});
  write_manifest(dir, "ingest", cfg, o, d.inputs);
  std::cout << "ingested " << d.cleaned.table.num_tickers() << " tickers x " << d.cleaned.table.num_steps()
            << " steps -> " << (dir / "bars.csv").string() << "\n";
  return 0;
}

int cmd_features(const Options& o) {
  auto cfg = load_config(o);
  auto d = load_market(cfg);
  auto dir = command_dir(o, cfg, "features");
  {
    std::ofstream f(dir / "features.csv", std::ios::binary);
    write_csv(d.market->features, f);
  }
  if (!d.market->risk.empty()) {
    std::string text = "timestamp";
    for (const auto& [name, s] : d.market->risk) text += "," + name;
    text += "\n";
    const auto& cal = d.market->bars.calendar();
    for (std::size_t t = 0; t < cal.size(); ++t) {
      text += format_timestamp(cal[t]);
      for (const auto& [name, s] : d.market->risk) text += "," + (std::isfinite(s[t]) ? util::format_double(s[t]) : "");
      text += "\n";
    }
    write_text(dir / "risk.csv", text);
  }
  write_manifest(dir, "features", cfg, o, d.inputs);
  std::cout << "features: " << d.market->num_features() << " per ticker, warmup " << d.market->warmup() << " -> "
            << (dir / "features.csv").string() << "\n";
  return 0;
}

struct SentimentResources {
  sentiment::LemmaRules rules = sentiment::LemmaRules::builtin();
  sentiment::TextContext ctx;
  std::vector<std::string> inputs;
};

// The context points into `rules`, so the struct must not be moved after this call.
void load_text_resources(const Config& cfg, SentimentResources& r) {
  if (auto p = cfg.str("sentiment", "lemma_rules"); !p.empty()) {
    r.rules = sentiment::LemmaRules::load(p);
    r.inputs.push_back(p);
  }
  if (auto p = cfg.str("sentiment", "abbreviations"); !p.empty()) {
    r.ctx.abbreviations = sentiment::load_abbreviations(p);
    r.inputs.push_back(p);
  }
  if (auto p = cfg.str("sentiment", "companies"); !p.empty()) {
    r.ctx.company_names = sentiment::load_word_list(p);
    r.inputs.push_back(p);
  }
  r.ctx.rules = &r.rules;
}

sentiment::ScoringOptions scoring_options(const Config& cfg) {
  sentiment::ScoringOptions s;
  s.alpha = cfg.real("sentiment", "alpha", s.alpha);
  if (!(s.alpha > 0.0)) throw ConfigError("sentiment.alpha must be > 0");
  return s;
}

std::pair<sentiment::SentimentDictionary, sentiment::ShifterTable> load_scoring(const Config& cfg,
                                                                                std::vector<std::string>& inputs) {
  auto dp = required_path(cfg, "sentiment", "dictionary");
  auto sp = required_path(cfg, "sentiment", "shifters");
  auto dict = sentiment::SentimentDictionary::load(dp);
  if (dict.empty()) throw DataError(dp + ": dictionary is empty");
  auto shifters = sentiment::ShifterTable::load(sp);
  shifters.validate();
  inputs.push_back(dp);
  inputs.push_back(sp);
  return {std::move(dict), std::move(shifters)};
}

int cmd_sentiment_score(const Options& o) {
  auto cfg = load_config(o);
  SentimentResources res;
  load_text_resources(cfg, res);
  auto [dict, shifters] = load_scoring(cfg, res.inputs);
  auto input = required_path(cfg, "sentiment", "input");
  res.inputs.push_back(input);
  auto dir = command_dir(o, cfg, "sentiment");
  const auto opts = scoring_options(cfg);
  std::string text = "line,compound,polarity\n";
  auto lines = util::read_lines(input);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (util::trim(lines[k]).empty()) continue;
    auto s = sentiment::score_document(res.ctx.preprocess(lines[k]), dict, shifters, opts);
    text += std::to_string(k + 1) + "," + util::format_double(s.compound) + "," + sentiment::to_string(s.polarity) + "\n";
  }
  write_text(dir / "scores.csv", text);
  write_manifest(dir, "sentiment score", cfg, o, res.inputs);
  std::cout << "scored " << input << " -> " << (dir / "scores.csv").string() << "\n";
  return 0;
}

int cmd_sentiment_build(const Options& o) {
  auto cfg = load_config(o);
  std::vector<std::string> inputs;
  auto need = [&](const char* key) {
    auto p = required_path(cfg, "sentiment", key);
    inputs.push_back(p);
    return p;
  };
  auto financial = sentiment::SentimentDictionary::load(need("financial"));
  auto general = sentiment::SentimentDictionary::load(need("general"));
  std::map<std::string, double> resolutions;
  if (auto p = cfg.str("sentiment", "resolutions"); !p.empty()) {
    auto loaded = sentiment::SentimentDictionary::load(p);
    for (const auto& [k, e] : loaded.entries()) resolutions[k] = e.valence;
    inputs.push_back(p);
  }
  auto merged = sentiment::merge_dictionaries(financial, general, resolutions);
  auto lexicon = sentiment::load_word_list(need("lexicon"));
  auto graph = sentiment::SynonymGraph::load(need("synonyms"));
  auto subj = sentiment::subjectivity_lookup(sentiment::load_subjectivity(need("subjectivity")));
  auto expansion = sentiment::expand_dictionary(merged.dictionary, lexicon, graph, subj);
  std::map<std::string, sentiment::Override> overrides;
  if (auto p = cfg.str("sentiment", "overrides"); !p.empty()) {
    overrides = sentiment::load_overrides(p);
    inputs.push_back(p);
  }
  auto applied = sentiment::apply_overrides(expansion.candidates, overrides);

  auto final_dict = merged.dictionary;
  for (const auto& [k, e] : applied.additions.entries()) final_dict.add(k, e.valence, e.provenance);
  auto dir = command_dir(o, cfg, "sentiment");
  {
    std::ofstream f(dir / "dictionary.tsv", std::ios::binary);
    final_dict.write(f);
  }
  json cands = json::array();
  for (const auto& c : expansion.candidates)
    cands.push_back({{"word", c.word}, {"synonym", c.synonym}, {"valence", c.valence}, {"path_similarity", c.path_similarity}});
  write_json(dir / "build_report.json", {{"merged_size", merged.dictionary.size()},
                                         {"contradictions", merged.contradictions},
                                         {"merge_warnings", merged.warnings},
                                         {"low_subjectivity", expansion.low_subjectivity},
                                         {"no_labeled_synonym", expansion.no_labeled_synonym},
                                         {"candidates", cands},
                                         {"pending", applied.pending},
                                         {"rejected", applied.rejected},
                                         {"override_warnings", applied.warnings},
                                         {"final_size", final_dict.size()}});
  for (const auto& w : merged.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : applied.warnings) std::cerr << "warning: " << w << "\n";
  write_manifest(dir, "sentiment build-dict", cfg, o, inputs);
  std::cout << "dictionary: " << final_dict.size() << " entries (" << merged.contradictions.size()
            << " unresolved contradictions, " << applied.pending.size() << " pending) -> "
            << (dir / "dictionary.tsv").string() << "\n";
  return 0;
}

int cmd_sentiment_eval(const Options& o) {
  auto cfg = load_config(o);
  SentimentResources res;
  load_text_resources(cfg, res);
  auto [dict, shifters] = load_scoring(cfg, res.inputs);
  auto cp = required_path(cfg, "sentiment", "corpus");
  res.inputs.push_back(cp);
  auto corpus = sentiment::LabeledCorpus::load(cp);
  auto r = sentiment::evaluate(corpus, dict, shifters, res.ctx, scoring_options(cfg));
  json items = json::array();
  for (std::size_t k = 0; k < corpus.items.size(); ++k)
    items.push_back({{"label", corpus.items[k].label},
                     {"compound", r.compounds[k]},
                     {"polarity", sentiment::to_string(sentiment::polarity_of(r.compounds[k]))},
                     {"label_polarity", sentiment::to_string(sentiment::label_polarity(corpus.items[k].label))}});
  json out = {{"polarity_accuracy", r.polarity_accuracy}, {"items", items}};
  out["valence_correlation"] = r.valence_correlation ? json(*r.valence_correlation) : json(nullptr);
  auto dir = command_dir(o, cfg, "sentiment");
  write_json(dir / "evaluation.json", out);
  write_manifest(dir, "sentiment eval", cfg, o, res.inputs);
  std::cout << "polarity accuracy " << util::format_double(r.polarity_accuracy) << ", valence correlation "
            << (r.valence_correlation ? util::format_double(*r.valence_correlation) : std::string("undefined")) << "\n";
  if (!r.valence_correlation) std::cerr << "warning: valence correlation undefined (constant predictions or labels)\n";
  return 0;
}

template <class Env>
std::unique_ptr<Policy> train_full(const Config& cfg, const MarketDataPtr& data) {
  TrainingContext ctx{data, env_kind_of<Env>(), env_config(cfg), data->warmup(), data->num_steps() - 1, {},
                      run_seed(cfg), 0};
  return build_policy<Env>(agent_settings(cfg), ctx);
}

int cmd_train(const Options& o) {
  auto cfg = load_config(o);
  auto d = load_market(cfg);
  auto policy = env_kind(cfg) == EnvKind::trading ? train_full<TradingEnv>(cfg, d.market)
                                                  : train_full<PortfolioEnv>(cfg, d.market);
  auto dir = command_dir(o, cfg, "train");
  write_json(dir / "policy.json", policy_to_json(*policy));
  write_manifest(dir, "train", cfg, o, d.inputs);
  std::cout << "trained " << policy->name() << " -> " << (dir / "policy.json").string() << "\n";
  return 0;
}

template <class Env>
BacktestResult run_backtest(const Config& cfg, const MarketDataPtr& data, std::vector<std::string>& inputs) {
  std::unique_ptr<Policy> policy;
  if (auto p = cfg.str("agent", "policy"); !p.empty()) {
    try {
      policy = policy_from_json(json::parse(util::read_file(p)));
    } catch (const json::exception& e) {
      throw DataError(p + ": " + e.what());
    }
    inputs.push_back(p);
  } else {
    policy = train_full<Env>(cfg, data);
  }
  return backtest(*policy, Env(data, env_config(cfg)), metric_options(cfg));
}

int cmd_backtest(const Options& o) {
  auto cfg = load_config(o);
  auto d = load_market(cfg);
  auto r = env_kind(cfg) == EnvKind::trading ? run_backtest<TradingEnv>(cfg, d.market, d.inputs)
                                             : run_backtest<PortfolioEnv>(cfg, d.market, d.inputs);
  auto dir = command_dir(o, cfg, "backtest");
  write_results(dir, r);
  write_manifest(dir, "backtest", cfg, o, d.inputs);
  std::cout << "backtest: cumulative return " << util::format_double(r.metrics.cumulative_return) << " -> "
            << dir.string() << "\n";
  return 0;
}

template <class Env>
RollingResult run_trade_sim(const Config& cfg, const MarketDataPtr& data) {
  auto plan = window_plan(cfg, *data);
  RollingOptions ro;
  ro.seed = run_seed(cfg);
  ro.metrics = metric_options(cfg);
  return run_rolling<Env>(data, env_config(cfg), plan, make_agent_factory<Env>(cfg), hyper_grid(cfg), ro);
}

int cmd_trade_sim(const Options& o) {
  auto cfg = load_config(o);
  auto d = load_market(cfg);
  auto r = env_kind(cfg) == EnvKind::trading ? run_trade_sim<TradingEnv>(cfg, d.market)
                                             : run_trade_sim<PortfolioEnv>(cfg, d.market);
  auto dir = command_dir(o, cfg, "trade-sim");
  write_results(dir, r.result);
  write_json(dir / "windows.json", windows_json(r.windows));
  write_manifest(dir, "trade-sim", cfg, o, d.inputs);
  std::size_t failed = 0;
  for (const auto& w : r.windows) failed += w.failed;
  if (failed) std::cerr << "warning: " << failed << " window(s) held flat after training failures\n";
  std::cout << "trade-sim: " << r.windows.size() << " windows, cumulative return "
            << util::format_double(r.result.metrics.cumulative_return) << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  auto cfg = load_config(o);
  fs::path root = o.report_dir.empty() ? output_root(o, cfg) : fs::path(o.report_dir);
  std::vector<fs::path> found;
  if (fs::is_directory(root))
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == "metrics.json") found.push_back(e.path());
  if (found.empty()) throw DataError("no results found in " + root.string());
  std::sort(found.begin(), found.end());
  json runs = json::array();
  std::string plot = "series,x,y\n";
  std::cout << "run                          cum_return   ann_return   sharpe       max_drawdown\n";
  for (const auto& path : found) {
    json m;
    try {
      m = json::parse(util::read_file(path.string()));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    const auto name = fs::relative(path.parent_path(), root).generic_string();
    runs.push_back({{"run", name}, {"metrics", m}});
    auto cell = [&](const char* k) {
      return m.contains(k) && m[k].is_number() ? util::format_double(m[k].get<double>()) : std::string("-");
    };
    std::printf("%-28s %-12s %-12s %-12s %s\n", name.c_str(), cell("cumulative_return").c_str(),
                cell("annualized_return").c_str(), cell("sharpe").c_str(), cell("max_drawdown").c_str());
    auto values = path.parent_path() / "values.csv";
    if (fs::exists(values)) {
      auto lines = util::read_lines(values.string());
      for (std::size_t k = 1; k < lines.size(); ++k) {
        auto f = util::split(lines[k], ',');
        if (f.size() == 2) plot += name + "," + f[0] + "," + f[1] + "\n";
      }
    }
  }
  write_json(root / "report.json", {{"runs", runs}});
  write_text(root / "plot.csv", plot);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantgym: market environments, agents and walk-forward backtests"};
  app.require_subcommand(1);
  Options opts;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config_path, "run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", opts.overrides, "override a key: section.key=value");
    sub->add_option("-o,--out", opts.out, "output directory (overrides QUANTGYM_OUT and run.output_dir)");
    return sub;
  };
  int (*handler)(const Options&) = nullptr;
  common(app.add_subcommand("ingest", "load and clean bars"))->callback([&] { handler = cmd_ingest; });
  common(app.add_subcommand("features", "compute the feature matrix and risk series"))->callback([&] {
    handler = cmd_features;
  });
  auto* sent = app.add_subcommand("sentiment", "lexicon sentiment tools");
  sent->require_subcommand(1);
  common(sent->add_subcommand("score", "score one text per line"))->callback([&] { handler = cmd_sentiment_score; });
  common(sent->add_subcommand("build-dict", "merge and expand dictionaries"))->callback([&] {
    handler = cmd_sentiment_build;
  });
  common(sent->add_subcommand("eval", "evaluate against a labeled corpus"))->callback([&] {
    handler = cmd_sentiment_eval;
  });
  common(app.add_subcommand("train", "train the configured agent on the full data range"))->callback([&] {
    handler = cmd_train;
  });
  common(app.add_subcommand("backtest", "backtest a policy over the full data range"))->callback([&] {
    handler = cmd_backtest;
  });
  common(app.add_subcommand("trade-sim", "rolling train/test/trade simulation"))->callback([&] {
    handler = cmd_trade_sim;
  });
  auto* rep = common(app.add_subcommand("report", "summarize result directories"));
  rep->add_option("dir", opts.report_dir, "directory to scan (default: output directory)");
  rep->callback([&] { handler = cmd_report; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : exit_code(ErrorKind::config);
  }
  try {
    return handler(opts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::runtime);
  }
}
