#pragma once

// Deterministic policy evaluation and Sharpe-based candidate selection.

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agents.hpp"
#include "env.hpp"
#include "error.hpp"
#include "metrics.hpp"

namespace quantgym {

struct TradeRow {
  Timestamp timestamp{};  // time at which the step's prices are realized
  std::size_t window = 0;
  std::vector<double> action;
  std::vector<double> executed;
  double cost = 0.0;
  double value = 0.0;
};

struct BacktestResult {
  std::vector<Timestamp> timestamps;
  std::vector<double> values;
  std::vector<double> returns;
  std::vector<TradeRow> trades;
  MetricSet metrics;

  void compute(const MetricOptions& opts) {
    returns = step_returns(values);
    std::vector<int> years;
    years.reserve(timestamps.size());
    for (auto t : timestamps)
      years.push_back(int(std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(t)}.year()));
    metrics = compute_metrics(values, opts, years);
  }
};

inline double value_of(const TradingState& s) { return s.value(); }
inline double value_of(const PortfolioState& s) { return s.value; }

inline void check_dims(const Policy& policy, std::size_t obs_dim) {
  if (auto d = policy.obs_dim(); d && *d != obs_dim)
    throw RuntimeError("policy '" + policy.name() + "' expects observations of size " + std::to_string(*d) +
                       ", environment provides " + std::to_string(obs_dim));
}

// Runs the policy from the env's current state to the end of its episode, appending to
// `out`. The starting value is appended only when `out` is empty.
template <MarketEnvironment Env>
void run_episode(Policy& policy, Env& env, BacktestResult& out, std::size_t window = 0) {
  check_dims(policy, env.obs_dim());
  const auto& cal = env.data().bars.calendar();
  if (out.values.empty()) {
    out.timestamps.push_back(cal[env.state().t]);
    out.values.push_back(value_of(env.state()));
  }
  while (!env.done()) {
    auto obs = env.observation();
    auto a = policy.act(obs);
    auto tr = env.apply(a.kind, a.values);
    const double v = value_of(tr.next_state);
    out.timestamps.push_back(cal[tr.next_state.t]);
    out.values.push_back(v);
    out.trades.push_back({cal[tr.next_state.t], window, std::move(a.values), tr.info.executed, tr.info.cost, v});
  }
}

template <MarketEnvironment Env>
BacktestResult backtest(Policy& policy, Env env, const MetricOptions& opts = {}) {
  env.reset();
  policy.reset();
  BacktestResult r;
  run_episode(policy, env, r);
  r.compute(opts);
  return r;
}

struct Selection {
  std::size_t index = 0;
  std::vector<std::optional<double>> sharpes;
  std::vector<double> cumulative_returns;
  bool used_fallback = false;  // every Sharpe undefined, chosen by cumulative return
};

// argmax of per-step Sharpe over value series; ties go to the lowest index.
inline Selection select_by_sharpe(std::span<const std::vector<double>> value_series) {
  if (value_series.empty()) throw RuntimeError("no candidates to select from");
  Selection s;
  for (const auto& v : value_series) {
    s.sharpes.push_back(sharpe_ratio(v));
    s.cumulative_returns.push_back(v.size() >= 1 ? (v.back() - v.front()) / v.front() : 0.0);
  }
  std::optional<double> best;
  for (std::size_t k = 0; k < s.sharpes.size(); ++k)
    if (s.sharpes[k] && (!best || *s.sharpes[k] > *best)) {
      best = s.sharpes[k];
      s.index = k;
    }
  if (!best) {
    s.used_fallback = true;
    s.index = 0;
    for (std::size_t k = 1; k < s.cumulative_returns.size(); ++k)
      if (s.cumulative_returns[k] > s.cumulative_returns[s.index]) s.index = k;
  }
  return s;
}

struct EnsembleReport {
  std::size_t window = 0;
  std::vector<std::optional<double>> sharpes;
  std::size_t chosen = 0;
  bool used_fallback = false;
};

// Backtests every candidate on the validation env and returns a clone of the best one.
template <MarketEnvironment Env>
std::pair<std::unique_ptr<Policy>, EnsembleReport> ensemble_select(std::span<const std::unique_ptr<Policy>> candidates,
                                                                   const Env& validation_env, std::size_t window = 0) {
  if (candidates.empty()) throw RuntimeError("ensemble_select needs at least one candidate");
  std::vector<std::vector<double>> series;
  for (const auto& c : candidates) {
    auto p = c->clone();
    series.push_back(backtest(*p, validation_env).values);
  }
  auto sel = select_by_sharpe(series);
  EnsembleReport rep{window, sel.sharpes, sel.index, sel.used_fallback};
  return {candidates[sel.index]->clone(), std::move(rep)};
}

}  // namespace quantgym
