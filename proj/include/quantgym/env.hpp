#pragma once

// Reset/step market environments: share trading (balance, prices, features, holdings)
// and portfolio allocation (value, prices, features, weights), plus batched stepping.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "market_data.hpp"

namespace quantgym {

// Dense bars, their features and optional risk series, all on one calendar.
struct MarketData {
  BarTable bars;
  FeatureMatrix features;
  std::map<std::string, std::vector<double>> risk;  // "turbulence" / "vix", NaN where undefined

  MarketData() = default;
  MarketData(BarTable b, FeatureMatrix f, std::map<std::string, std::vector<double>> r = {})
      : bars(std::move(b)), features(std::move(f)), risk(std::move(r)) {
    if (!bars.dense()) throw DataError("market data requires a dense bar table");
    if (features.calendar != bars.calendar() || features.tickers != bars.tickers())
      throw DataError("feature matrix is not aligned with the bar table");
    for (const auto& [name, s] : risk)
      if (s.size() != bars.num_steps()) throw DataError("risk series '" + name + "' is not aligned");
  }

  std::size_t num_steps() const { return bars.num_steps(); }
  std::size_t num_tickers() const { return bars.num_tickers(); }
  std::size_t num_features() const { return features.num_features(); }
  std::size_t warmup() const { return features.warmup; }
  double price(std::size_t t, std::size_t i) const { return bars.close(t, i); }
  std::vector<double> prices(std::size_t t) const { return bars.closes(t); }

  MarketData slice(std::size_t begin, std::size_t end) const {
    MarketData out;
    out.bars = bars.slice(begin, end);
    out.features = features.slice(begin, end);
    end = std::min(end, num_steps());
    begin = std::min(begin, end);
    for (const auto& [name, s] : risk)
      out.risk[name] = std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                           s.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }
};

using MarketDataPtr = std::shared_ptr<const MarketData>;

enum class RiskIndicator { none, turbulence, vix };

inline std::string to_string(RiskIndicator r) {
  switch (r) {
    case RiskIndicator::none: return "none";
    case RiskIndicator::turbulence: return "turbulence";
    case RiskIndicator::vix: return "vix";
  }
  return "none";
}

struct EnvConfig {
  double initial_capital = 1'000'000.0;
  double cost_rate = 0.001;  // fraction of traded notional
  double h_max = 100.0;      // shares per unit action
  bool allow_short = false;
  bool allow_margin = false;
  RiskIndicator risk_indicator = RiskIndicator::none;
  double risk_threshold = std::numeric_limits<double>::infinity();
  double reward_scale = 1.0;
  bool charge_turnover = false;  // portfolio env only

  void validate() const {
    if (!(initial_capital > 0.0) || !std::isfinite(initial_capital)) throw ConfigError("initial_capital must be > 0");
    if (!(cost_rate >= 0.0 && cost_rate <= 0.1)) throw ConfigError("cost_rate must lie in [0, 0.1]");
    if (!(h_max > 0.0)) throw ConfigError("h_max must be > 0");
    if (!std::isfinite(reward_scale)) throw ConfigError("reward_scale must be finite");
  }
};

// How a policy's output vector is interpreted by an environment.
enum class ActionKind {
  normalized,  // per-ticker values in [-1, 1] (trading) or logits (portfolio)
  shares,      // per-ticker share deltas (trading only)
  weights,     // target weights on the simplex
};

struct StepInfo {
  double cost = 0.0;
  bool risk_triggered = false;
  bool auto_reset = false;
  std::vector<double> executed;  // executed share deltas (trading) or applied weights (portfolio)
};

template <class State>
struct Transition {
  State state;
  std::vector<double> action_applied;
  double reward = 0.0;
  State next_state;
  bool done = false;
  StepInfo info;
};

struct TradingState {
  std::size_t t = 0;
  double balance = 0.0;
  std::vector<double> holdings;
  std::vector<double> prices;
  std::vector<double> features;  // n x I

  double value() const {
    double v = balance;
    for (std::size_t i = 0; i < prices.size(); ++i) v += prices[i] * holdings[i];
    return v;
  }

  // [b, p, f, h]; dimension 1 + n + n*I + n.
  std::vector<double> observation() const {
    std::vector<double> o;
    o.reserve(1 + prices.size() * 2 + features.size());
    o.push_back(balance);
    o.insert(o.end(), prices.begin(), prices.end());
    o.insert(o.end(), features.begin(), features.end());
    o.insert(o.end(), holdings.begin(), holdings.end());
    return o;
  }

  friend bool operator==(const TradingState&, const TradingState&) = default;
};

struct PortfolioState {
  std::size_t t = 0;
  double value = 0.0;
  std::vector<double> prices;
  std::vector<double> features;
  std::vector<double> weights;

  // [v, p, f, w]
  std::vector<double> observation() const {
    std::vector<double> o;
    o.reserve(1 + prices.size() * 2 + features.size());
    o.push_back(value);
    o.insert(o.end(), prices.begin(), prices.end());
    o.insert(o.end(), features.begin(), features.end());
    o.insert(o.end(), weights.begin(), weights.end());
    return o;
  }

  friend bool operator==(const PortfolioState&, const PortfolioState&) = default;
};

namespace detail {

// Episode bounds shared by both environments.
class EnvBase {
 public:
  EnvBase(MarketDataPtr data, EnvConfig config, std::optional<std::size_t> start,
          std::optional<std::size_t> last)
      : data_(std::move(data)), config_(config) {
    config_.validate();
    if (!data_ || data_->num_steps() == 0 || data_->num_tickers() == 0) throw DataError("environment data is empty");
    start_ = start.value_or(data_->warmup());
    last_ = last.value_or(data_->num_steps() - 1);
    if (start_ < data_->warmup())
      throw DataError("episode start " + std::to_string(start_) + " precedes feature warmup " +
                      std::to_string(data_->warmup()));
    if (last_ >= data_->num_steps() || start_ > last_) throw DataError("invalid episode range");
    if (config_.risk_indicator != RiskIndicator::none && !data_->risk.count(to_string(config_.risk_indicator)))
      throw DataError("risk indicator '" + to_string(config_.risk_indicator) + "' has no series in the data");
  }

  const EnvConfig& config() const { return config_; }
  const MarketData& data() const { return *data_; }
  const MarketDataPtr& data_ptr() const { return data_; }
  std::size_t start() const { return start_; }
  std::size_t last() const { return last_; }
  std::size_t num_tickers() const { return data_->num_tickers(); }
  std::size_t action_dim() const { return data_->num_tickers(); }
  std::size_t obs_dim() const { return 1 + data_->num_tickers() * (data_->num_features() + 2); }

  bool risk_triggered(std::size_t t) const {
    if (config_.risk_indicator == RiskIndicator::none) return false;
    double v = data_->risk.at(to_string(config_.risk_indicator))[t];
    return std::isfinite(v) && v > config_.risk_threshold;
  }

 protected:
  std::vector<double> features_at(std::size_t t) const {
    auto row = data_->features.row(t);
    return {row.begin(), row.end()};
  }

  MarketDataPtr data_;
  EnvConfig config_;
  std::size_t start_ = 0;
  std::size_t last_ = 0;
};

inline void check_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) throw RuntimeError("non-finite action");
}

}  // namespace detail

class TradingEnv : public detail::EnvBase {
 public:
  using state_type = TradingState;
  using transition_type = Transition<TradingState>;

  TradingEnv(MarketDataPtr data, EnvConfig config, std::optional<std::size_t> start = std::nullopt,
             std::optional<std::size_t> last = std::nullopt)
      : EnvBase(std::move(data), config, start, last) {
    reset();
  }

  const TradingState& reset() {
    return reset_account(config_.initial_capital, std::vector<double>(num_tickers(), 0.0));
  }

  // Starts an episode at start() with a given account (used to carry capital over).
  const TradingState& reset_account(double balance, std::vector<double> holdings) {
    if (holdings.size() != num_tickers()) throw DataError("holdings dimension mismatch");
    state_ = make_state(start_, balance, std::move(holdings));
    return state_;
  }

  const TradingState& state() const { return state_; }
  bool done() const { return state_.t == last_; }
  std::vector<double> observation() const { return state_.observation(); }

  // Actions in [-1, 1] (clipped) scaled by h_max and rounded to whole shares.
  transition_type step(std::span<const double> action) {
    if (action.size() != num_tickers()) throw RuntimeError("action dimension mismatch");
    detail::check_finite(action);
    std::vector<double> deltas(action.size());
    for (std::size_t i = 0; i < action.size(); ++i)
      deltas[i] = std::round(std::clamp(action[i], -1.0, 1.0) * config_.h_max);
    return execute(deltas);
  }

  // Raw whole-share deltas, still subject to the account constraints.
  transition_type step_shares(std::span<const double> deltas) {
    if (deltas.size() != num_tickers()) throw RuntimeError("action dimension mismatch");
    detail::check_finite(deltas);
    std::vector<double> d(deltas.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::round(deltas[i]);
    return execute(d);
  }

  // Share deltas that move the account toward target value weights (cost-aware, whole shares).
  std::vector<double> shares_for_weights(std::span<const double> weights) const {
    if (weights.size() != num_tickers()) throw RuntimeError("weights dimension mismatch");
    const double v = state_.value();
    std::vector<double> d(weights.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      double target = std::floor(std::max(weights[i], 0.0) * v / (state_.prices[i] * (1.0 + config_.cost_rate)));
      d[i] = target - state_.holdings[i];
    }
    return d;
  }

  transition_type apply(ActionKind kind, std::span<const double> action) {
    switch (kind) {
      case ActionKind::normalized: return step(action);
      case ActionKind::shares: return step_shares(action);
      case ActionKind::weights: return step_shares(shares_for_weights(action));
    }
    throw RuntimeError("unknown action kind");
  }

 private:
  TradingState make_state(std::size_t t, double balance, std::vector<double> holdings) const {
    return TradingState{t, balance, std::move(holdings), data_->prices(t), features_at(t)};
  }

  transition_type execute(std::vector<double> deltas) {
    if (done()) throw RuntimeError("step called on a finished episode");
    transition_type tr;
    tr.state = state_;
    const std::size_t n = num_tickers();
    const auto& p = state_.prices;
    double balance = state_.balance;
    std::vector<double> h = state_.holdings;
    const double c = config_.cost_rate;

    if (risk_triggered(state_.t)) {
      tr.info.risk_triggered = true;
      for (std::size_t i = 0; i < n; ++i) deltas[i] = -h[i];
    }
    // sells (and short covers when liquidating) first, in ticker order
    for (std::size_t i = 0; i < n; ++i) {
      if (deltas[i] >= 0.0) continue;
      if (!config_.allow_short) deltas[i] = std::max(deltas[i], -h[i]);
      if (deltas[i] == 0.0) {
        deltas[i] = 0.0;  // no -0 in logs
        continue;
      }
      const double notional = -deltas[i] * p[i];
      balance += notional - c * notional;
      tr.info.cost += c * notional;
      h[i] += deltas[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (deltas[i] <= 0.0) continue;
      double q = deltas[i];
      if (!config_.allow_margin) {
        const double unit = p[i] * (1.0 + c);
        q = std::min(q, std::floor(std::max(balance, 0.0) / unit));
        while (q > 0.0 && balance - (q * p[i] + c * (q * p[i])) < 0.0) q -= 1.0;
        q = std::max(q, 0.0);
      }
      deltas[i] = q;
      if (q == 0.0) continue;
      const double notional = q * p[i];
      balance -= notional + c * notional;
      tr.info.cost += c * notional;
      h[i] += q;
    }
    tr.info.executed = deltas;
    tr.action_applied = std::move(deltas);
    const double v_before = state_.value();
    state_ = make_state(state_.t + 1, balance, std::move(h));
    tr.reward = (state_.value() - v_before) * config_.reward_scale;
    tr.next_state = state_;
    tr.done = done();
    return tr;
  }

  TradingState state_;
};

// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> w(x.size());
  if (x.empty()) return w;
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (w[i] = std::exp(x[i] - m));
  for (auto& v : w) v /= z;
  return w;
}

class PortfolioEnv : public detail::EnvBase {
 public:
  using state_type = PortfolioState;
  using transition_type = Transition<PortfolioState>;

  PortfolioEnv(MarketDataPtr data, EnvConfig config, std::optional<std::size_t> start = std::nullopt,
               std::optional<std::size_t> last = std::nullopt)
      : EnvBase(std::move(data), config, start, last) {
    reset();
  }

  const PortfolioState& reset() { return reset_account(config_.initial_capital, uniform()); }

  const PortfolioState& reset_account(double value, std::vector<double> weights) {
    if (weights.size() != num_tickers()) throw DataError("weights dimension mismatch");
    state_ = PortfolioState{start_, value, data_->prices(start_), features_at(start_), std::move(weights)};
    return state_;
  }

  const PortfolioState& state() const { return state_; }
  bool done() const { return state_.t == last_; }
  std::vector<double> observation() const { return state_.observation(); }

  // Any real vector, mapped to the simplex by softmax.
  transition_type step(std::span<const double> action) {
    if (action.size() != num_tickers()) throw RuntimeError("action dimension mismatch");
    detail::check_finite(action);
    return execute(softmax(action));
  }

  transition_type step_weights(std::span<const double> weights) {
    if (weights.size() != num_tickers()) throw RuntimeError("weights dimension mismatch");
    detail::check_finite(weights);
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw RuntimeError("weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw RuntimeError("weights must sum to 1");
    return execute({weights.begin(), weights.end()});
  }

  transition_type apply(ActionKind kind, std::span<const double> action) {
    switch (kind) {
      case ActionKind::normalized: return step(action);
      case ActionKind::weights: return step_weights(action);
      case ActionKind::shares: break;
    }
    throw RuntimeError("share orders are not supported by the portfolio environment");
  }

 private:
  std::vector<double> uniform() const {
    return std::vector<double>(num_tickers(), 1.0 / static_cast<double>(num_tickers()));
  }

  transition_type execute(std::vector<double> w) {
    if (done()) throw RuntimeError("step called on a finished episode");
    transition_type tr;
    tr.state = state_;
    if (risk_triggered(state_.t)) {
      tr.info.risk_triggered = true;
      w = uniform();
    }
    double v = state_.value;
    if (config_.charge_turnover) {
      double turnover = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) turnover += std::abs(w[i] - state_.weights[i]);
      tr.info.cost = v * config_.cost_rate * 0.5 * turnover;
      v -= tr.info.cost;
    }
    const std::size_t t1 = state_.t + 1;
    auto p1 = data_->prices(t1);
    double growth = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) growth += w[i] * (p1[i] / state_.prices[i]);
    const double v_before = state_.value;
    tr.info.executed = w;
    tr.action_applied = w;
    state_ = PortfolioState{t1, v * growth, std::move(p1), features_at(t1), std::move(w)};
    tr.reward = (state_.value - v_before) * config_.reward_scale;
    tr.next_state = state_;
    tr.done = done();
    return tr;
  }

  PortfolioState state_;
};

template <class E>
concept MarketEnvironment = requires(E e, const E ce, std::span<const double> a) {
  typename E::transition_type;
  { e.reset() };
  { e.step(a) } -> std::same_as<typename E::transition_type>;
  { ce.done() } -> std::convertible_to<bool>;
  { ce.observation() } -> std::convertible_to<std::vector<double>>;
  { ce.obs_dim() } -> std::convertible_to<std::size_t>;
  { ce.action_dim() } -> std::convertible_to<std::size_t>;
};

// Steps every environment with its action. A finished environment is reset first and
// the transition is flagged with info.auto_reset. Results equal a sequential loop.
template <MarketEnvironment Env>
std::vector<typename Env::transition_type> batch_step(std::span<Env> envs,
                                                      std::span<const std::vector<double>> actions,
                                                      unsigned threads = 0) {
  if (envs.size() != actions.size()) throw RuntimeError("batch_step: envs and actions differ in length");
  std::vector<typename Env::transition_type> out(envs.size());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      bool reset = envs[k].done();
      if (reset) envs[k].reset();
      out[k] = envs[k].step(actions[k]);
      out[k].info.auto_reset = reset;
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, envs.size()));
  if (threads <= 1 || envs.size() < 16) {
    run(0, envs.size());
    return out;
  }
  // exceptions in workers are rethrown on the calling thread
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (envs.size() + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t lo = w * chunk, hi = std::min(envs.size(), lo + chunk);
      pool.emplace_back([&, w, lo, hi] {
        try {
          run(lo, hi);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Per-step trace of a trading episode, exported as
// `t,timestamp,action...,holdings...,balance,value,reward,cost,risk_triggered`.
class EpisodeTrace {
 public:
  void record(const BarTable& bars, const Transition<TradingState>& tr) {
    rows_.push_back({tr.next_state.t, bars.calendar()[tr.next_state.t], tr.action_applied, tr.next_state.holdings,
                     tr.next_state.balance, tr.next_state.value(), tr.reward, tr.info.cost, tr.info.risk_triggered});
  }

  void write_csv(std::ostream& out, const std::vector<std::string>& tickers) const {
    out << "t,timestamp";
    for (const auto& tk : tickers) out << ",action_" << tk;
    for (const auto& tk : tickers) out << ",holdings_" << tk;
    out << ",balance,value,reward,cost,risk_triggered\n";
    for (const auto& r : rows_) {
      out << r.t << ',' << format_timestamp(r.timestamp);
      for (double a : r.action) out << ',' << util::format_double(a);
      for (double h : r.holdings) out << ',' << util::format_double(h);
      out << ',' << util::format_double(r.balance) << ',' << util::format_double(r.value) << ','
          << util::format_double(r.reward) << ',' << util::format_double(r.cost) << ',' << (r.risk ? 1 : 0) << '\n';
    }
  }

  std::size_t size() const { return rows_.size(); }

 private:
  struct Row {
    std::size_t t;
    Timestamp timestamp;
    std::vector<double> action, holdings;
    double balance, value, reward, cost;
    bool risk;
  };
  std::vector<Row> rows_;
};

}  // namespace quantgym
