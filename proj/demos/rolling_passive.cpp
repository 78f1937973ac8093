// Rolling buy-and-hold on the synthetic data, compared against one direct backtest.

#include <iostream>

#include "quantgym/quantgym.hpp"

using namespace quantgym;

int main(int argc, char** argv) {
  std::string path = argc > 1 ? argv[1] : "data/synthetic/bars.csv";
  try {
    auto table = clean(ingest(path, std::chrono::days{1}), {}).table;
    auto fm = compute_feature_matrix(table, {IndicatorSpec::parse("macd"), IndicatorSpec::parse("rsi_14")});
    auto data = std::make_shared<const MarketData>(table, fm);
    EnvConfig cfg;
    auto plan = plan_for(*data, 20, 5, 10);
    ObservationLayout layout{data->num_tickers(), data->num_features()};
    AgentFactory passive = [&](const TrainingContext&) { return baseline_passive(EnvKind::trading, layout, cfg.cost_rate); };
    auto rolled = run_rolling<TradingEnv>(data, cfg, plan, passive, {{}});

    auto [first, last] = plan.segment(plan.windows.front().trade_day, plan.windows.back().trade_day);
    PassivePolicy direct(EnvKind::trading, layout, cfg.cost_rate);
    auto bt = backtest(direct, TradingEnv(data, cfg, first, last));

    std::cout << "day                        rolling         direct\n";
    for (std::size_t k = 0; k < bt.values.size(); ++k)
      std::cout << format_timestamp(bt.timestamps[k]) << "  " << util::format_double(rolled.result.values[k]) << "  "
                << util::format_double(bt.values[k]) << "\n";
    std::cout << "cumulative return " << util::format_double(rolled.result.metrics.cumulative_return) << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  }
}
