#pragma once

// Builds data, environments and agents from a run configuration.

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agents.hpp"
#include "config.hpp"
#include "env.hpp"
#include "error.hpp"
#include "features.hpp"
#include "market_data.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "util.hpp"

namespace quantgym {

inline EnvKind env_kind(const Config& cfg) {
  auto t = cfg.str("env", "type", "trading");
  if (t == "trading") return EnvKind::trading;
  if (t == "portfolio") return EnvKind::portfolio;
  throw ConfigError("env.type must be trading or portfolio, got '" + t + "'");
}

inline EnvConfig env_config(const Config& cfg) {
  EnvConfig e;
  e.initial_capital = cfg.real("env", "initial_capital", e.initial_capital);
  e.cost_rate = cfg.real("env", "cost_rate", e.cost_rate);
  e.h_max = cfg.real("env", "h_max", e.h_max);
  e.allow_short = cfg.boolean("env", "allow_short", e.allow_short);
  e.allow_margin = cfg.boolean("env", "allow_margin", e.allow_margin);
  auto ri = cfg.str("env", "risk_indicator", "none");
  if (ri == "none") e.risk_indicator = RiskIndicator::none;
  else if (ri == "turbulence") e.risk_indicator = RiskIndicator::turbulence;
  else if (ri == "vix") e.risk_indicator = RiskIndicator::vix;
  else throw ConfigError("env.risk_indicator must be none, turbulence or vix");
  e.risk_threshold = cfg.real("env", "risk_threshold", e.risk_threshold);
  e.reward_scale = cfg.real("env", "reward_scale", e.reward_scale);
  e.charge_turnover = cfg.boolean("env", "charge_turnover", e.charge_turnover);
  e.validate();
  return e;
}

inline MetricOptions metric_options(const Config& cfg) {
  MetricOptions m;
  m.risk_free = cfg.real("pipeline", "risk_free", m.risk_free);
  m.steps_per_day = static_cast<double>(cfg.integer("pipeline", "steps_per_day", 1));
  m.annualization_basis = cfg.real("pipeline", "annualization_basis", m.annualization_basis);
  if (!(m.steps_per_day >= 1.0)) throw ConfigError("pipeline.steps_per_day must be >= 1");
  if (!(m.annualization_basis > 0.0)) throw ConfigError("pipeline.annualization_basis must be > 0");
  return m;
}

inline std::uint64_t run_seed(const Config& cfg) {
  auto s = cfg.integer("run", "seed", 0);
  if (s < 0) throw ConfigError("run.seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

// Agent settings after applying a hyper-parameter point on top of the [agent] section.
struct AgentSettings {
  std::string type = "passive";
  TrainConfig train;
  std::size_t rebalance_every = 0;
  double risk_aversion = 1.0;
  std::size_t estimation_window = 0;  // 0 = whole training segment
};

inline AgentSettings agent_settings(const Config& cfg, const HyperPoint& hyper = {}) {
  Config c = cfg;
  for (const auto& [k, v] : hyper) c.set("agent", k, v, "grid");
  auto pos = [&](const char* key, long long def) {
    auto v = c.integer("agent", key, def);
    if (v < 0) throw ConfigError(std::string("agent.") + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  AgentSettings a;
  a.type = c.str("agent", "type", a.type);
  auto& t = a.train;
  t.total_steps = pos("total_steps", static_cast<long long>(t.total_steps));
  t.learning_rate = c.real("agent", "learning_rate", t.learning_rate);
  t.gamma = c.real("agent", "gamma", t.gamma);
  t.n_steps = pos("n_steps", static_cast<long long>(t.n_steps));
  t.num_envs = pos("num_envs", static_cast<long long>(t.num_envs));
  t.entropy_coef = c.real("agent", "entropy_coef", t.entropy_coef);
  t.value_coef = c.real("agent", "value_coef", t.value_coef);
  t.hidden = pos("hidden", static_cast<long long>(t.hidden));
  t.max_grad_norm = c.real("agent", "max_grad_norm", t.max_grad_norm);
  t.init_log_std = c.real("agent", "init_log_std", t.init_log_std);
  t.cem_iterations = pos("cem_iterations", static_cast<long long>(t.cem_iterations));
  t.cem_population = pos("cem_population", static_cast<long long>(t.cem_population));
  t.cem_elite_fraction = c.real("agent", "cem_elite_fraction", t.cem_elite_fraction);
  t.cem_init_std = c.real("agent", "cem_init_std", t.cem_init_std);
  t.seed = run_seed(c);
  t.validate();
  a.rebalance_every = pos("rebalance_every", 0);
  a.risk_aversion = c.real("agent", "risk_aversion", a.risk_aversion);
  a.estimation_window = pos("estimation_window", 0);
  static const std::set<std::string> known = {"hold", "passive", "equal", "mean_variance", "min_variance", "a2c", "cem"};
  if (!known.count(a.type)) throw ConfigError("unknown agent.type '" + a.type + "'");
  return a;
}

template <MarketEnvironment Env>
std::unique_ptr<Policy> build_policy(const AgentSettings& a, const TrainingContext& ctx) {
  const EnvKind kind = ctx.env_kind;
  const ObservationLayout layout{ctx.data->num_tickers(), ctx.data->num_features()};
  if (a.type == "hold") return std::make_unique<HoldPolicy>(kind, layout);
  if (a.type == "passive") return baseline_passive(kind, layout, ctx.env_config.cost_rate);
  if (a.type == "equal") return baseline_equal(kind, layout, a.rebalance_every);
  if (a.type == "mean_variance" || a.type == "min_variance") {
    const std::size_t window = a.estimation_window > 0 ? a.estimation_window : ctx.last - ctx.first;
    auto m = estimate_moments(ctx.data->bars, ctx.last + 1, window);
    auto mode = a.type == "min_variance" ? AllocationMode::min_variance : AllocationMode::mean_variance;
    auto w = mean_variance_weights(m.mean, m.covariance, a.risk_aversion, mode);
    return std::make_unique<TargetWeightsPolicy>(a.type, kind, layout, std::move(w), a.rebalance_every);
  }
  TrainConfig t = a.train;
  t.seed = ctx.seed;
  Env env(ctx.data, ctx.env_config, ctx.first, ctx.last);
  if (a.type == "a2c") return std::make_unique<GaussianPolicy>(train_a2c(env, t));
  return std::make_unique<GaussianPolicy>(train_cem(env, t));
}

template <MarketEnvironment Env>
AgentFactory make_agent_factory(const Config& cfg) {
  agent_settings(cfg);  // validate eagerly
  return [cfg](const TrainingContext& ctx) { return build_policy<Env>(agent_settings(cfg, ctx.hyper), ctx); };
}

struct LoadedData {
  BarTable raw;
  CleanResult cleaned;
  MarketDataPtr market;
  std::vector<std::string> inputs;  // files read, for the manifest
};

inline Duration data_frequency(const Config& cfg) {
  auto f = parse_frequency(cfg.str("data", "frequency", "1day"));
  if (!f) throw ConfigError("data.frequency is not a valid frequency");
  return *f;
}

inline CleaningPolicy cleaning_policy(const Config& cfg) {
  CleaningPolicy p;
  auto cal = cfg.str("data", "calendar", "intersection");
  if (cal == "intersection") p.calendar_rule = CalendarRule::intersection;
  else if (cal == "union") p.calendar_rule = CalendarRule::union_;
  else throw ConfigError("data.calendar must be intersection or union");
  auto fill = cfg.str("data", "fill", "forward_backward");
  if (fill == "forward_backward") p.fill_rule = FillRule::forward_backward;
  else if (fill == "drop_ticker") p.fill_rule = FillRule::drop_ticker;
  else throw ConfigError("data.fill must be forward_backward or drop_ticker");
  p.min_coverage = cfg.real("data", "min_coverage", 0.0);
  return p;
}

inline std::vector<IndicatorSpec> indicator_specs(const Config& cfg) {
  std::vector<IndicatorSpec> specs;
  for (const auto& s : cfg.list("features", "indicators", {"macd", "rsi_14", "cci_20", "adx_14"}))
    specs.push_back(IndicatorSpec::parse(s));
  return specs;
}

inline std::string required_path(const Config& cfg, const std::string& section, const std::string& key) {
  auto p = cfg.str(section, key);
  if (p.empty()) throw ConfigError(section + "." + key + " is required for this command");
  return p;
}

// Series file `timestamp,value`; steps without a row are NaN.
inline std::vector<double> read_aligned_series(const std::string& path, const std::vector<Timestamp>& calendar) {
  auto lines = util::read_lines(path);
  if (lines.empty() || util::trim(lines[0]) != "timestamp,value") throw DataError(path + ": header must be 'timestamp,value'");
  std::map<Timestamp, double> rows;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (util::trim(lines[ln]).empty()) continue;
    auto f = util::split(lines[ln], ',');
    auto ts = f.size() == 2 ? parse_timestamp(f[0]) : std::nullopt;
    auto v = f.size() == 2 ? util::parse_double(f[1]) : std::nullopt;
    if (!ts || !v) throw DataError(path + ":" + std::to_string(ln + 1) + ": malformed row");
    rows[*ts] = *v;
  }
  std::vector<double> out(calendar.size(), kUndefined);
  for (std::size_t t = 0; t < calendar.size(); ++t)
    if (auto it = rows.find(calendar[t]); it != rows.end()) out[t] = it->second;
  return out;
}

inline LoadedData load_bars(const Config& cfg) {
  LoadedData d;
  auto path = required_path(cfg, "data", "path");
  d.raw = ingest(path, data_frequency(cfg));
  d.cleaned = clean(d.raw, cleaning_policy(cfg));
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.path().extension() == ".csv") d.inputs.push_back(e.path().string());
    std::sort(d.inputs.begin(), d.inputs.end());
  } else {
    d.inputs.push_back(path);
  }
  return d;
}

inline TurbulenceOptions turbulence_options(const Config& cfg) {
  TurbulenceOptions o;
  auto w = cfg.integer("features", "turbulence_window", 252);
  if (w < 1) throw ConfigError("features.turbulence_window must be positive");
  o.window = static_cast<std::size_t>(w);
  o.small_sample_correction = cfg.boolean("features", "turbulence_correction", false);
  return o;
}

inline LoadedData load_market(const Config& cfg) {
  LoadedData d = load_bars(cfg);
  const auto& table = d.cleaned.table;
  std::vector<FeatureColumn> extra;
  for (auto [key, kind, name] : {std::tuple{"sentiment_events", EventKind::sentiment, "sentiment"},
                                 std::tuple{"fundamental_events", EventKind::fundamental, "fundamental"}}) {
    auto p = cfg.str("data", key);
    if (p.empty()) continue;
    extra.push_back(align_events(table, read_events_csv(p, kind), name).column);
    d.inputs.push_back(p);
  }
  auto fm = compute_feature_matrix(table, indicator_specs(cfg), extra);
  std::map<std::string, std::vector<double>> risk;
  const auto env = env_config(cfg);
  if (cfg.boolean("features", "turbulence", false) || env.risk_indicator == RiskIndicator::turbulence)
    risk["turbulence"] = turbulence(table, turbulence_options(cfg)).values;
  if (auto p = cfg.str("data", "vix"); !p.empty()) {
    risk["vix"] = read_aligned_series(p, table.calendar());
    d.inputs.push_back(p);
  }
  d.market = std::make_shared<const MarketData>(table, std::move(fm), std::move(risk));
  return d;
}

inline WindowPlan window_plan(const Config& cfg, const MarketData& data) {
  auto get = [&](const char* key, long long def) {
    auto v = cfg.integer("pipeline", key, def);
    if (v < 0) throw ConfigError(std::string("pipeline.") + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  return plan_for(data, get("N", 20), get("S", 5), get("D", 5), get("steps_per_day", 1));
}

}  // namespace quantgym
