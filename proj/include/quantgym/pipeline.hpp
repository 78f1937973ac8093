#pragma once

// Rolling train / test / trade driver and result export.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "agents.hpp"
#include "backtest.hpp"
#include "env.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "util.hpp"

namespace quantgym {

struct Window {
  std::size_t id = 0;
  std::size_t train_first = 0, train_last = 0;
  std::size_t test_first = 0, test_last = 0;
  std::size_t trade_day = 0;
};

// Days are groups of `steps_per_day` consecutive steps starting at `offset`.
struct WindowPlan {
  std::size_t N = 0, S = 0, D = 0;
  std::size_t steps_per_day = 1;
  std::size_t offset = 0;
  std::vector<Window> windows;

  std::size_t step_of(std::size_t day) const { return offset + day * steps_per_day; }

  // Env state range [first, last] covering days [a, b]: decisions at the close of day a-1
  // (or the first step of day 0) through the last step of day b.
  std::pair<std::size_t, std::size_t> segment(std::size_t a, std::size_t b) const {
    return {a == 0 ? step_of(0) : step_of(a) - 1, step_of(b + 1) - 1};
  }
  std::size_t last_step() const { return segment(0, windows.back().trade_day).second; }
};

inline WindowPlan plan_windows(std::size_t num_days, std::size_t N, std::size_t S, std::size_t D,
                               std::size_t steps_per_day = 1, std::size_t offset = 0) {
  if (N == 0 || D == 0 || steps_per_day == 0) throw ConfigError("N, D and steps_per_day must be positive");
  if (N + S + D > num_days)
    throw DataError("calendar of " + std::to_string(num_days) + " days is shorter than N+S+D = " +
                    std::to_string(N + S + D));
  WindowPlan p{N, S, D, steps_per_day, offset, {}};
  for (std::size_t k = 0; k < D; ++k) {
    const std::size_t d = N + S + k;
    p.windows.push_back({k, d - S - N, d - S - 1, d - S, d - 1, d});
  }
  return p;
}

// Plan over market data: day 0 starts at the first day boundary at or after the feature warmup.
inline WindowPlan plan_for(const MarketData& data, std::size_t N, std::size_t S, std::size_t D,
                           std::size_t steps_per_day = 1) {
  if (steps_per_day == 0) throw ConfigError("steps_per_day must be positive");
  const std::size_t offset = (data.warmup() + steps_per_day - 1) / steps_per_day * steps_per_day;
  const std::size_t T = data.num_steps();
  const std::size_t days = T > offset ? (T - offset) / steps_per_day : 0;
  return plan_windows(days, N, S, D, steps_per_day, offset);
}

using HyperPoint = std::map<std::string, std::string>;

struct TrainingContext {
  MarketDataPtr data;  // rows after `last` are not visible
  EnvKind env_kind = EnvKind::trading;
  EnvConfig env_config;
  std::size_t first = 0, last = 0;
  HyperPoint hyper;
  std::uint64_t seed = 0;
  std::size_t window = 0;
};

using AgentFactory = std::function<std::unique_ptr<Policy>(const TrainingContext&)>;

struct RollingOptions {
  std::uint64_t seed = 0;
  MetricOptions metrics;
  bool parallel = true;  // train grid candidates concurrently
};

struct WindowReport {
  std::size_t id = 0;
  std::size_t trade_day = 0;
  Timestamp trade_time{};
  std::size_t chosen = 0;
  std::vector<std::optional<double>> validation_sharpes;
  bool used_fallback = false;
  bool failed = false;  // no agent could be trained; the account was held
  std::string message;
};

struct RollingResult {
  BacktestResult result;
  std::vector<WindowReport> windows;
};

template <class Env>
constexpr EnvKind env_kind_of() {
  if constexpr (std::is_same_v<Env, TradingEnv>) return EnvKind::trading;
  else return EnvKind::portfolio;
}

template <MarketEnvironment Env>
RollingResult run_rolling(const MarketDataPtr& data, const EnvConfig& config, const WindowPlan& plan,
                          const AgentFactory& factory, const std::vector<HyperPoint>& grid,
                          const RollingOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("hyper-parameter grid is empty");
  if (plan.windows.empty()) throw ConfigError("window plan is empty");
  if (plan.last_step() >= data->num_steps()) throw DataError("window plan exceeds the data");
  constexpr EnvKind kind = env_kind_of<Env>();
  const ObservationLayout layout{data->num_tickers(), data->num_features()};
  auto visible = [&](std::size_t last) { return std::make_shared<const MarketData>(data->slice(0, last + 1)); };
  auto context = [&](std::size_t a, std::size_t b, const HyperPoint& hp, std::uint64_t seed, std::size_t w) {
    auto [first, last] = plan.segment(a, b);
    return TrainingContext{visible(last), kind, config, first, last, hp, seed, w};
  };

  RollingResult out;
  std::optional<typename Env::state_type> carry;
  for (const auto& win : plan.windows) {
    WindowReport rep;
    rep.id = win.id;
    rep.trade_day = win.trade_day;
    std::unique_ptr<Policy> policy;
    try {
      // Step 1: train on N days per grid point, pick the best validation Sharpe on S days
      std::size_t chosen = 0;
      if (grid.size() > 1) {
        if (plan.S == 0) throw ConfigError("hyper-parameter selection needs S > 0 test days");
        auto [tf, tl] = plan.segment(win.test_first, win.test_last);
        auto test_data = visible(tl);
        auto evaluate = [&, tf = tf, tl = tl](std::size_t g) -> std::optional<std::vector<double>> {
          try {
            auto pol = factory(context(win.train_first, win.train_last, grid[g], util::mix_seed(opts.seed, win.id, g), win.id));
            return backtest(*pol, Env(test_data, config, tf, tl), opts.metrics).values;
          } catch (const RuntimeError&) {
            return std::nullopt;
          }
        };
        std::vector<std::optional<std::vector<double>>> evals(grid.size());
        if (opts.parallel) {
          std::vector<std::future<std::optional<std::vector<double>>>> futs;
          for (std::size_t g = 0; g < grid.size(); ++g) futs.push_back(std::async(std::launch::async, evaluate, g));
          for (std::size_t g = 0; g < grid.size(); ++g) evals[g] = futs[g].get();
        } else {
          for (std::size_t g = 0; g < grid.size(); ++g) evals[g] = evaluate(g);
        }
        std::vector<std::vector<double>> ok;
        std::vector<std::size_t> ok_index;
        for (std::size_t g = 0; g < grid.size(); ++g)
          if (evals[g]) {
            ok.push_back(*evals[g]);
            ok_index.push_back(g);
          }
        if (ok.empty()) throw RuntimeError("every grid candidate failed to train");
        auto sel = select_by_sharpe(ok);
        chosen = ok_index[sel.index];
        rep.validation_sharpes.assign(grid.size(), std::nullopt);
        for (std::size_t k = 0; k < ok.size(); ++k) rep.validation_sharpes[ok_index[k]] = sel.sharpes[k];
        rep.used_fallback = sel.used_fallback;
      }
      rep.chosen = chosen;
      // Step 2: retrain the chosen configuration on N+S days
      policy = factory(context(win.train_first, win.test_last, grid[chosen],
                               util::mix_seed(opts.seed, win.id, 0x5EED0000ULL + chosen), win.id));
      check_dims(*policy, layout.size());
    } catch (const RuntimeError& e) {
      rep.failed = true;
      rep.message = e.what();
      policy = std::make_unique<HoldPolicy>(kind, layout);
    }

    // Step 3: trade day d with the account carried over from day d-1
    auto [first, last] = plan.segment(win.trade_day, win.trade_day);
    Env env(visible(last), config, first, last);
    if (carry) {
      if constexpr (kind == EnvKind::trading) env.reset_account(carry->balance, carry->holdings);
      else {
        std::vector<double> w = carry->weights;
        double z = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] *= carry->prices[i] / data->price(carry->t - 1, i));
        for (auto& x : w) x /= z;
        env.reset_account(carry->value, std::move(w));
      }
    } else {
      env.reset();
    }
    rep.trade_time = data->bars.calendar()[last];
    policy->reset();
    run_episode(*policy, env, out.result, win.id);
    carry = env.state();
    out.windows.push_back(std::move(rep));
  }
  out.result.compute(opts.metrics);
  return out;
}

// ---- export ------------------------------------------------------------------------

inline nlohmann::json metrics_json(const MetricSet& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m.to_map()) j[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  return j;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += util::format_double(v[i]);
  }
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// metrics.json, values.csv and trades.csv.
inline void write_results(const std::filesystem::path& dir, const BacktestResult& r) {
  std::filesystem::create_directories(dir);
  auto mj = metrics_json(r.metrics);
  mj["initial_value"] = r.values.front();
  mj["final_value"] = r.values.back();
  write_text(dir / "metrics.json", mj.dump(2) + "\n");
  std::string values = "timestamp,value\n";
  for (std::size_t k = 0; k < r.values.size(); ++k)
    values += format_timestamp(r.timestamps[k]) + "," + util::format_double(r.values[k]) + "\n";
  write_text(dir / "values.csv", values);
  std::string trades = "timestamp,window,action,executed,cost,value\n";
  for (const auto& t : r.trades)
    trades += format_timestamp(t.timestamp) + "," + std::to_string(t.window) + "," + join_doubles(t.action) + "," +
              join_doubles(t.executed) + "," + util::format_double(t.cost) + "," + util::format_double(t.value) + "\n";
  write_text(dir / "trades.csv", trades);
}

inline nlohmann::json windows_json(const std::vector<WindowReport>& reports) {
  auto arr = nlohmann::json::array();
  for (const auto& w : reports) {
    auto sh = nlohmann::json::array();
    for (const auto& s : w.validation_sharpes) sh.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    arr.push_back({{"window", w.id},
                   {"trade_day", w.trade_day},
                   {"trade_time", format_timestamp(w.trade_time)},
                   {"chosen", w.chosen},
                   {"validation_sharpes", sh},
                   {"used_fallback", w.used_fallback},
                   {"failed", w.failed},
                   {"message", w.message}});
  }
  return arr;
}

}  // namespace quantgym
