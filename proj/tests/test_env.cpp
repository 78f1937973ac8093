#include <catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"

using namespace qt;
using Catch::Approx;

namespace {

MarketDataPtr frozen(std::size_t T, std::vector<double> prices) {
  return market(table_from_closes(std::vector<std::vector<double>>(T, prices)));
}

EnvConfig cfg(double capital = 1000.0, double cost = 0.001) {
  EnvConfig c;
  c.initial_capital = capital;
  c.cost_rate = cost;
  return c;
}

std::vector<double> random_action(std::mt19937_64& rng, std::size_t n, double scale = 1.3) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> a(n);
  for (auto& x : a) x = u(rng);
  return a;
}

}  // namespace

TEST_CASE("trading reset") {
  auto data = frozen(10, {10.0, 20.0});
  TradingEnv env(data, cfg());
  CHECK(env.state().value() == 1000.0);
  CHECK(env.state().t == 1);
  CHECK(env.obs_dim() == 1 + 2 * (1 + 2));
  CHECK(env.observation().size() == env.obs_dim());
  auto first = env.state();
  env.step(std::vector<double>{0.5, 0.1});
  CHECK(env.reset() == first);
  CHECK_THROWS_AS(TradingEnv(data, cfg(), 0), DataError);
  CHECK_THROWS_AS(TradingEnv(data, cfg(), 5, 3), DataError);
  CHECK_THROWS_AS(TradingEnv(nullptr, cfg()), DataError);
  CHECK_THROWS_AS(TradingEnv(data, cfg(-1.0)), ConfigError);
  CHECK_THROWS_AS(TradingEnv(data, cfg(1000.0, 0.2)), ConfigError);
}

TEST_CASE("trading step examples") {
  auto data = frozen(10, {10.0});
  TradingEnv env(data, cfg(1000.0, 0.001));
  auto tr = env.step_shares(std::vector<double>{1.0});
  CHECK(tr.next_state.balance - 1000.0 == Approx(-10.01).epsilon(1e-12));
  CHECK(tr.reward == Approx(-0.01).epsilon(1e-9));
  CHECK(tr.info.cost == Approx(0.01).epsilon(1e-12));

  TradingEnv idle(market(table_from_closes({{10}, {10}, {15}, {8}})), cfg(), 1);
  CHECK(idle.step(std::vector<double>{0.0}).reward == 0.0);
  CHECK(idle.step(std::vector<double>{0.0}).reward == 0.0);

  TradingEnv clip(data, cfg(1000.0, 0.0));
  clip.step_shares(std::vector<double>{3.0});
  auto sell = clip.step_shares(std::vector<double>{-5.0});
  CHECK(sell.action_applied[0] == -3.0);
  CHECK(sell.next_state.holdings[0] == 0.0);
}

TEST_CASE("action scaling, clipping and greedy buys") {
  auto data = frozen(10, {10.0, 30.0});
  TradingEnv env(data, cfg(2000.0, 0.0));
  auto tr = env.step(std::vector<double>{0.504, 7.0});
  CHECK(tr.action_applied[0] == 50.0);
  // 1500 left buys 50 shares at 30
  CHECK(tr.action_applied[1] == 50.0);
  CHECK(tr.next_state.balance == 0.0);
  auto more = env.step(std::vector<double>{0.2, 0.2});
  CHECK(more.action_applied == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(env.step(std::vector<double>{NAN, 0.0}), RuntimeError);
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), RuntimeError);
}

TEST_CASE("weights orders and step after done") {
  auto data = frozen(4, {10.0, 20.0});
  TradingEnv env(data, cfg(1000.0, 0.0));
  auto tr = env.apply(ActionKind::weights, std::vector<double>{0.5, 0.5});
  CHECK(tr.next_state.holdings == std::vector<double>{50.0, 25.0});
  env.step(std::vector<double>{0, 0});
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(std::vector<double>{0, 0}), RuntimeError);
}

TEST_CASE("trading invariants on random episodes") {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 30; ++rep) {
    auto data = market(random_table(rng, 60, 3, 0.05));
    EnvConfig c = cfg(5000.0 + 1000.0 * rep, rep % 3 == 0 ? 0.0 : 0.001);
    c.h_max = 20;
    TradingEnv env(data, c);
    const double v0 = env.state().value();
    double sum = 0.0;
    while (!env.done()) {
      auto tr = env.step(random_action(rng, 3));
      sum += tr.reward;
      const auto& s = tr.next_state;
      double pv = s.balance;
      for (std::size_t i = 0; i < 3; ++i) pv += s.prices[i] * s.holdings[i];
      CHECK(rel_diff(s.value(), pv) <= 1e-9);
      CHECK(s.balance >= 0.0);
      for (double h : s.holdings) CHECK(h >= 0.0);
      CHECK(tr.done == (s.t == env.last()));
    }
    CHECK(rel_diff(sum, env.state().value() - v0) <= 1e-9);
  }
}

TEST_CASE("cost-free trades are reversible at frozen prices") {
  std::mt19937_64 rng(7);
  auto data = frozen(200, {12.5, 40.0, 7.25});
  EnvConfig c = cfg(1e7, 0.0);
  TradingEnv env(data, c);
  for (int rep = 0; rep < 90 && !env.done(); ++rep) {
    auto before = env.state();
    auto a = random_action(rng, 3, 1.0);
    if (rep % 2 == 0)
      for (std::size_t i = 0; i < 3; ++i) a[i] = std::abs(a[i]);
    env.step(a);
    std::vector<double> back(3);
    for (std::size_t i = 0; i < 3; ++i) back[i] = -a[i];
    env.step(back);
    if (rep % 2 == 0) {
      CHECK(env.state().balance == before.balance);
      CHECK(env.state().holdings == before.holdings);
    }
  }
}

TEST_CASE("short and margin flags lift the constraints") {
  auto data = frozen(6, {10.0});
  EnvConfig c = cfg(100.0, 0.0);
  c.allow_short = true;
  c.allow_margin = true;
  TradingEnv env(data, c);
  auto s = env.step_shares(std::vector<double>{-4.0});
  CHECK(s.next_state.holdings[0] == -4.0);
  auto b = env.step_shares(std::vector<double>{30.0});
  CHECK(b.next_state.balance == Approx(100.0 + 40.0 - 300.0));
}

TEST_CASE("risk override liquidates") {
  std::mt19937_64 rng(3);
  auto table = random_table(rng, 40, 2);
  std::vector<double> turb(40, 0.0);
  for (std::size_t t = 0; t < 40; t += 3) turb[t] = 100.0;
  turb[2] = NAN;
  auto data = market(table, {IndicatorSpec::parse("sma_2")}, {{"turbulence", turb}});
  EnvConfig c = cfg(1e5);
  c.risk_indicator = RiskIndicator::turbulence;
  c.risk_threshold = 50.0;
  TradingEnv env(data, c);
  PortfolioEnv penv(data, c);
  while (!env.done()) {
    const std::size_t t = env.state().t;
    auto tr = env.step(std::vector<double>{1.0, 1.0});
    auto pt = penv.step(std::vector<double>{3.0, -1.0});
    CHECK(tr.info.risk_triggered == (turb[t] > 50.0));
    if (tr.info.risk_triggered) {
      CHECK(tr.next_state.holdings == std::vector<double>{0.0, 0.0});
      CHECK(pt.action_applied == std::vector<double>{0.5, 0.5});
    }
  }
  EnvConfig v = c;
  v.risk_indicator = RiskIndicator::vix;
  CHECK_THROWS_AS(TradingEnv(data, v), DataError);
}

TEST_CASE("portfolio reset and step examples") {
  auto data = market(table_from_closes({{10, 10, 10, 10}, {10, 10, 10, 10}, {10.5, 11, 9, 10}, {10.5, 11, 9, 10}}));
  EnvConfig c = cfg(1000.0, 0.0);
  PortfolioEnv env(data, c);
  CHECK(env.state().weights == std::vector<double>(4, 0.25));
  CHECK(env.state().value == 1000.0);
  auto first = env.state();
  auto tr = env.step_weights(std::vector<double>{1, 0, 0, 0});
  CHECK(tr.next_state.value == Approx(1050.0).epsilon(1e-14));
  CHECK(env.reset() == first);
  auto eq = env.step_weights(std::vector<double>{0, 0.5, 0.5, 0});
  CHECK(eq.next_state.value == Approx(1000.0).epsilon(1e-14));
  CHECK(softmax(std::vector<double>{2.0, 2.0}) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(env.step(std::vector<double>{INFINITY, 0, 0, 0}), RuntimeError);
  CHECK_THROWS_AS(env.step_weights(std::vector<double>{0.5, 0.6, 0, 0}), RuntimeError);
  CHECK_THROWS_AS(env.apply(ActionKind::shares, std::vector<double>{1, 0, 0, 0}), RuntimeError);
}

TEST_CASE("portfolio turnover cost") {
  auto data = frozen(5, {10.0, 10.0});
  EnvConfig c = cfg(1000.0, 0.01);
  c.charge_turnover = true;
  PortfolioEnv env(data, c);
  auto tr = env.step_weights(std::vector<double>{1.0, 0.0});
  CHECK(tr.info.cost == Approx(1000.0 * 0.01 * 0.5 * 1.0));
  CHECK(tr.next_state.value == Approx(995.0));
  c.charge_turnover = false;
  PortfolioEnv free(data, c);
  CHECK(free.step_weights(std::vector<double>{1.0, 0.0}).next_state.value == 1000.0);
}

TEST_CASE("portfolio invariants on random episodes") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    auto data = market(random_table(rng, 50, 4, 0.04));
    EnvConfig c = cfg(1e6, 0.001);
    c.charge_turnover = rep % 2 == 1;
    PortfolioEnv env(data, c);
    const double v0 = env.state().value;
    double sum = 0.0;
    while (!env.done()) {
      auto prev = env.state();
      auto tr = env.step(random_action(rng, 4, 30.0));
      sum += tr.reward;
      double total = 0.0;
      for (double w : tr.next_state.weights) {
        CHECK(w >= 0.0);
        total += w;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
      if (!c.charge_turnover) {
        double g = 0.0;
        for (std::size_t i = 0; i < 4; ++i) g += tr.next_state.weights[i] * tr.next_state.prices[i] / prev.prices[i];
        CHECK(rel_diff(tr.next_state.value, prev.value * g) <= 1e-12);
      }
    }
    CHECK(rel_diff(sum, env.state().value - v0) <= 1e-9);
  }
}

TEST_CASE("batch_step equals a sequential loop") {
  std::mt19937_64 rng(5);
  std::vector<TradingEnv> batch, seq;
  for (int k = 0; k < 24; ++k) {
    auto data = market(random_table(rng, 8 + static_cast<std::size_t>(k % 5), 3));
    batch.emplace_back(data, cfg(1e4));
    seq.emplace_back(data, cfg(1e4));
  }
  for (int step = 0; step < 20; ++step) {
    std::vector<std::vector<double>> actions;
    for (std::size_t k = 0; k < batch.size(); ++k) actions.push_back(random_action(rng, 3));
    auto out = batch_step<TradingEnv>(batch, actions, 4);
    for (std::size_t k = 0; k < seq.size(); ++k) {
      bool reset = seq[k].done();
      if (reset) seq[k].reset();
      auto tr = seq[k].step(actions[k]);
      CHECK(out[k].info.auto_reset == reset);
      CHECK(out[k].next_state == tr.next_state);
      CHECK(out[k].reward == tr.reward);
      CHECK(out[k].action_applied == tr.action_applied);
    }
  }

  auto data = market(random_table(rng, 12, 2));
  std::vector<PortfolioEnv> same(5, PortfolioEnv(data, cfg()));
  std::vector<std::vector<double>> acts(5, std::vector<double>{0.3, -0.2});
  auto out = batch_step<PortfolioEnv>(same, acts);
  for (const auto& tr : out) CHECK(tr.next_state == out[0].next_state);

  PortfolioEnv single(data, cfg());
  std::vector<PortfolioEnv> one{single};
  CHECK(batch_step<PortfolioEnv>(one, std::span(acts).first(1))[0].next_state ==
        single.step(acts[0]).next_state);
  CHECK_THROWS_AS(batch_step<PortfolioEnv>(one, acts), RuntimeError);
}

TEST_CASE("episode trace export") {
  auto data = frozen(4, {10.0});
  TradingEnv env(data, cfg());
  EpisodeTrace trace;
  while (!env.done()) trace.record(data->bars, env.step(std::vector<double>{0.01}));
  CHECK(trace.size() == 2);
  std::ostringstream out;
  trace.write_csv(out, data->bars.tickers());
  CHECK(out.str().rfind("t,timestamp,action_T10,holdings_T10,balance,value,reward,cost,risk_triggered\n", 0) == 0);
}
