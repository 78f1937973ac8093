#pragma once

// Performance metrics computed from a portfolio value series.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace quantgym {

struct MetricOptions {
  double risk_free = 0.0;            // per-step rate
  double steps_per_day = 1.0;
  double annualization_basis = 365;  // days per year in the annualized return exponent
};

struct MetricSet {
  double cumulative_return = 0.0;
  double annualized_return = 0.0;
  std::optional<double> annualized_volatility;        // across calendar years, needs >= 2 years
  std::optional<double> annualized_volatility_steps;  // std of step returns * sqrt(steps per year)
  std::optional<double> sharpe;                       // per-step, unannualized
  std::optional<double> sharpe_annualized;
  double max_drawdown = 0.0;
  double mean_step_return = 0.0;
  double std_step_return = 0.0;
  std::size_t num_steps = 0;
  double trading_days = 0.0;

  // Flat key -> value map; undefined entries are absent.
  std::map<std::string, std::optional<double>> to_map() const {
    return {{"cumulative_return", cumulative_return},
            {"annualized_return", annualized_return},
            {"annualized_volatility", annualized_volatility},
            {"annualized_volatility_steps", annualized_volatility_steps},
            {"sharpe", sharpe},
            {"sharpe_annualized", sharpe_annualized},
            {"max_drawdown", max_drawdown},
            {"mean_step_return", mean_step_return},
            {"std_step_return", std_step_return},
            {"num_steps", static_cast<double>(num_steps)},
            {"trading_days", trading_days}};
  }
};

inline std::vector<double> step_returns(std::span<const double> values) {
  std::vector<double> r;
  for (std::size_t t = 1; t < values.size(); ++t) r.push_back((values[t] - values[t - 1]) / values[t - 1]);
  return r;
}

inline double max_drawdown(std::span<const double> values) {
  double peak = values.empty() ? 0.0 : values[0];
  double mdd = 0.0;
  for (double v : values) {
    peak = std::max(peak, v);
    mdd = std::max(mdd, (peak - v) / peak);
  }
  return mdd;
}

// Sharpe of a value series with population std; empty when the std vanishes.
inline std::optional<double> sharpe_ratio(std::span<const double> values, double risk_free = 0.0) {
  auto r = step_returns(values);
  if (r.empty()) return std::nullopt;
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= static_cast<double>(r.size());
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  var /= static_cast<double>(r.size());
  if (!(var > 0.0)) return std::nullopt;
  return (mean - risk_free) / std::sqrt(var);
}

// `years` (optional) labels the calendar year of each value; it drives the
// across-year annualized volatility.
inline MetricSet compute_metrics(std::span<const double> values, const MetricOptions& opts = {},
                                 std::span<const int> years = {}) {
  if (values.size() < 2) throw DataError("metrics need at least two values");
  for (double v : values)
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("metrics need a strictly positive value series");
  if (!years.empty() && years.size() != values.size()) throw DataError("year labels must align with values");

  MetricSet m;
  const double v0 = values.front(), vT = values.back();
  m.num_steps = values.size() - 1;
  m.trading_days = static_cast<double>(m.num_steps) / opts.steps_per_day;
  m.cumulative_return = (vT - v0) / v0;
  m.annualized_return = std::pow(1.0 + m.cumulative_return, opts.annualization_basis / m.trading_days) - 1.0;

  auto r = step_returns(values);
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= static_cast<double>(r.size());
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  var /= static_cast<double>(r.size());
  m.mean_step_return = mean;
  m.std_step_return = std::sqrt(var);
  const double steps_per_year = opts.annualization_basis * opts.steps_per_day;
  if (var > 0.0) {
    m.sharpe = (mean - opts.risk_free) / m.std_step_return;
    m.sharpe_annualized = *m.sharpe * std::sqrt(steps_per_year);
  }
  if (r.size() >= 2) m.annualized_volatility_steps = m.std_step_return * std::sqrt(steps_per_year);
  m.max_drawdown = max_drawdown(values);

  if (!years.empty()) {
    // yearly return = last value of the year / last value of the previous year (or first value) - 1
    std::vector<double> yearly;
    double base = values[0];
    for (std::size_t t = 1; t < values.size(); ++t) {
      bool year_end = (t + 1 == values.size()) || years[t + 1] != years[t];
      if (year_end) {
        yearly.push_back(values[t] / base - 1.0);
        base = values[t];
      }
    }
    if (yearly.size() >= 2) {
      double ym = 0.0;
      for (double y : yearly) ym += y;
      ym /= static_cast<double>(yearly.size());
      double ss = 0.0;
      for (double y : yearly) ss += (y - ym) * (y - ym);
      m.annualized_volatility = std::sqrt(ss / static_cast<double>(yearly.size() - 1));
    }
  }
  return m;
}

}  // namespace quantgym
