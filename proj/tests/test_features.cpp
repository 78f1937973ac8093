#include <catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace qt;
using Catch::Approx;

namespace {

struct Ohlc {
  std::vector<double> h, l, c;
};

Ohlc columns(const BarTable& t, std::size_t i) {
  Ohlc o;
  for (std::size_t k = 0; k < t.num_steps(); ++k) {
    o.h.push_back(t.bar(k, i).high);
    o.l.push_back(t.bar(k, i).low);
    o.c.push_back(t.bar(k, i).close);
  }
  return o;
}

BarTable constant_table(std::size_t T, double price) {
  std::vector<std::vector<double>> closes(T, std::vector<double>{price});
  return table_from_closes(closes);
}

}  // namespace

TEST_CASE("indicators match from-definition oracles on random series") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    auto table = random_table(rng, 90, 1, 0.03);
    auto o = columns(table, 0);
    auto macd = compute_indicator(table, IndicatorSpec::parse("macd"));
    auto sig = compute_indicator(table, IndicatorSpec::parse("macds"));
    auto rsi = compute_indicator(table, IndicatorSpec::parse("rsi_14"));
    auto cci = compute_indicator(table, IndicatorSpec::parse("cci_20"));
    auto adx = compute_indicator(table, IndicatorSpec::parse("adx_14"));
    for (std::size_t t = 0; t < table.num_steps(); ++t) {
      if (t < 25) CHECK(std::isnan(macd.at(t, 0)));
      else CHECK(macd.at(t, 0) == Approx(oracle::macd(o.c, t)).margin(1e-8));
      if (t >= 33) CHECK(sig.at(t, 0) == Approx(oracle::macd_signal(o.c, t)).margin(1e-8));
      if (t < 14) CHECK(std::isnan(rsi.at(t, 0)));
      else CHECK(rsi.at(t, 0) == Approx(oracle::rsi(o.c, t)).margin(1e-8));
      if (t >= 19) CHECK(cci.at(t, 0) == Approx(oracle::cci(o.h, o.l, o.c, t)).margin(1e-8));
      if (t < 27) CHECK(std::isnan(adx.at(t, 0)));
      else CHECK(adx.at(t, 0) == Approx(oracle::adx(o.h, o.l, o.c, t)).margin(1e-8));
    }
  }
}

TEST_CASE("constant series conventions hold exactly") {
  auto table = constant_table(60, 37.25);
  for (const char* name : {"macd", "macds"}) {
    auto col = compute_indicator(table, IndicatorSpec::parse(name));
    for (std::size_t t = col.warmup; t < 60; ++t) CHECK(col.at(t, 0) == 0.0);
  }
  auto rsi = compute_indicator(table, IndicatorSpec::parse("rsi_14"));
  auto cci = compute_indicator(table, IndicatorSpec::parse("cci_20"));
  auto adx = compute_indicator(table, IndicatorSpec::parse("adx_14"));
  auto sma = compute_indicator(table, IndicatorSpec::parse("sma_7"));
  auto ema = compute_indicator(table, IndicatorSpec::parse("ema_9"));
  for (std::size_t t = 27; t < 60; ++t) {
    CHECK(rsi.at(t, 0) == 50.0);
    CHECK(cci.at(t, 0) == 0.0);
    CHECK(adx.at(t, 0) == 0.0);
    CHECK(sma.at(t, 0) == 37.25);
    CHECK(ema.at(t, 0) == 37.25);
  }
}

TEST_CASE("SMA of 1..40 at index 10 is 9") {
  std::vector<std::vector<double>> closes;
  for (int k = 1; k <= 40; ++k) closes.push_back({double(k)});
  auto col = compute_indicator(table_from_closes(closes), IndicatorSpec::parse("sma_5"));
  CHECK(col.at(10, 0) == 9.0);
  CHECK(std::isnan(col.at(3, 0)));
  CHECK(col.name == "sma_5");
}

TEST_CASE("rising series has RSI 100") {
  std::vector<std::vector<double>> closes;
  for (int k = 1; k <= 30; ++k) closes.push_back({double(k)});
  auto col = compute_indicator(table_from_closes(closes), IndicatorSpec::parse("rsi"));
  CHECK(col.at(20, 0) == 100.0);
}

TEST_CASE("indicator specs parse and validate") {
  CHECK(IndicatorSpec::parse("macd").warmup() == 25);
  CHECK(IndicatorSpec::parse("macds").warmup() == 33);
  CHECK(IndicatorSpec::parse("adx_14").warmup() == 27);
  CHECK(IndicatorSpec::parse("rsi").name() == "rsi_14");
  CHECK(IndicatorSpec::parse("macd_5_10_3").name() == "macd_5_10_3");
  CHECK_THROWS_AS(IndicatorSpec::parse("bollinger"), ConfigError);
  CHECK_THROWS_AS(IndicatorSpec::parse("rsi_0"), ConfigError);
  CHECK_THROWS_AS(IndicatorSpec::parse("macd_26_12_9"), ConfigError);
  CHECK_THROWS_AS(compute_indicator(constant_table(10, 1.0), IndicatorSpec::parse("sma_20")), DataError);
}

TEST_CASE("indicators are causal") {
  std::mt19937_64 rng(99);
  std::vector<IndicatorSpec> specs;
  for (const char* s : {"macd", "macds", "rsi_14", "cci_20", "adx_14", "sma_5", "ema_10"})
    specs.push_back(IndicatorSpec::parse(s));
  for (int rep = 0; rep < 20; ++rep) {
    auto table = random_table(rng, 70, 2);
    const std::size_t cut = 40 + static_cast<std::size_t>(rep);
    auto bars = table.bars();
    std::normal_distribution<double> nd(0.0, 0.2);
    for (auto& b : bars)
      if (b.timestamp > table.calendar()[cut]) {
        const double f = std::exp(nd(rng));
        b.open *= f;
        b.close *= f;
        b.high = std::max(b.open, b.close) * 1.05 * f / f;
        b.low = std::min(b.open, b.close) * 0.95;
      }
    auto perturbed = BarTable::from_bars(table.frequency(), bars);
    auto a = compute_feature_matrix(table, specs);
    auto b = compute_feature_matrix(perturbed, specs);
    for (std::size_t t = a.warmup; t <= cut; ++t)
      for (std::size_t j = 0; j < a.row(t).size(); ++j) CHECK(a.row(t)[j] == b.row(t)[j]);
  }
}

TEST_CASE("feature matrix stacks columns in declaration order") {
  std::mt19937_64 rng(3);
  auto table = random_table(rng, 40, 2);
  EventSeries ev{EventKind::sentiment, {{table.calendar()[30], "T10", 0.5}}};
  auto col = align_events(table, ev, "sentiment").column;
  auto fm = compute_feature_matrix(table, {IndicatorSpec::parse("rsi_14"), IndicatorSpec::parse("sma_5")}, {col});
  CHECK(fm.num_features() == 3);
  CHECK(fm.names == std::vector<std::string>{"rsi_14", "sma_5", "sentiment"});
  CHECK(fm.warmup == 14);
  CHECK(fm.at(30, 0, 2) == 0.5);
  CHECK(fm.at(30, 1, 2) == 0.0);
  CHECK_THROWS_AS(compute_feature_matrix(table, {}), ConfigError);
  CHECK_THROWS_AS(compute_feature_matrix(table, {IndicatorSpec::parse("sma_5"), IndicatorSpec::parse("sma_5")}),
                  ConfigError);
  auto wide = compute_feature_matrix(table, {IndicatorSpec::parse("sma_27"), IndicatorSpec::parse("rsi_14")});
  CHECK(wide.warmup == 26);
  auto other = random_table(rng, 41, 2);
  auto misaligned = align_events(other, ev, "sentiment").column;
  CHECK_THROWS_AS(compute_feature_matrix(table, {IndicatorSpec::parse("sma_5")}, {misaligned}), DataError);
}

TEST_CASE("scalar turbulence equals the squared z-score") {
  // alternating +-1% returns have mean 0 and sample variance w/(w-1) * 1e-4
  const std::size_t w = 10;
  Eigen::MatrixXd rows(w, 1);
  for (std::size_t k = 0; k < w; ++k) rows(static_cast<Eigen::Index>(k), 0) = k % 2 ? -0.01 : 0.01;
  const double sd = std::sqrt(1e-4 * w / (w - 1.0));
  Eigen::VectorXd y(1);
  y(0) = 2.0 * sd;
  CHECK(mahalanobis_turbulence(rows, y) == Approx(4.0).epsilon(1e-7));
  y(0) = 0.0;
  CHECK(mahalanobis_turbulence(rows, y) == Approx(0.0).margin(1e-12));
}

TEST_CASE("turbulence over a table: definedness, deviation at the mean, scale invariance") {
  std::mt19937_64 rng(8);
  auto table = random_table(rng, 80, 3);
  TurbulenceOptions o{20, false};
  auto s = turbulence(table, o);
  CHECK(s.first_defined == 21);
  for (std::size_t t = 0; t < 21; ++t) CHECK(std::isnan(s.values[t]));
  for (std::size_t t = 21; t < 80; ++t) CHECK(s.values[t] >= 0.0);

  auto bars = table.bars();
  for (auto& b : bars) {
    b.open *= 3.5;
    b.high *= 3.5;
    b.low *= 3.5;
    b.close *= 3.5;
  }
  auto scaled = turbulence(BarTable::from_bars(table.frequency(), bars), o);
  for (std::size_t t = 21; t < 80; ++t) CHECK(scaled.values[t] == Approx(s.values[t]).epsilon(1e-6));

  CHECK_THROWS_AS(turbulence(table, {4, false}), ConfigError);

  // price path whose last return equals the trailing mean return
  std::vector<std::vector<double>> closes{{100.0}};
  for (int k = 0; k < 12; ++k) closes.push_back({closes.back()[0] * (k % 2 ? 0.99 : 1.01)});
  auto r = simple_returns(table_from_closes(closes));
  double mean = 0.0;
  for (std::size_t k = 2; k < 12; ++k) mean += r[k];
  mean /= 10.0;
  closes.push_back({closes.back()[0] * (1.0 + mean)});
  auto flat = turbulence(table_from_closes(closes), {10, false});
  CHECK(flat.values[13] == Approx(0.0).margin(1e-9));
}

TEST_CASE("small-sample correction rescales the index") {
  std::mt19937_64 rng(1);
  auto table = random_table(rng, 60, 2);
  auto a = turbulence(table, {20, false});
  auto b = turbulence(table, {20, true});
  const double f = (20.0 - 2.0 - 2.0) * 20.0 / (21.0 * 19.0);
  CHECK(b.values[40] == Approx(f * a.values[40]).epsilon(1e-12));
}

TEST_CASE("events align to the table calendar") {
  std::vector<Bar> bars;
  const auto t0 = make_date(2022, 3, 1) + std::chrono::hours{10};
  for (int k = 0; k < 6; ++k) bars.push_back(flat_bar(t0 + std::chrono::minutes{10 * k}, "AAPL", 10));
  auto table = BarTable::from_bars(std::chrono::minutes{10}, bars);

  auto none = align_events(table, {EventKind::sentiment, {}}, "s");
  for (double v : none.column.values) CHECK(v == 0.0);

  EventSeries two{EventKind::sentiment,
                  {{t0 + std::chrono::minutes{21}, "AAPL", 0.4}, {t0 + std::chrono::minutes{28}, "AAPL", 0.8},
                   {t0 + std::chrono::minutes{30}, "ZZZ", 1.0}}};
  auto aligned = align_events(table, two, "s");
  CHECK(aligned.column.at(3, 0) == Approx(0.6).epsilon(1e-15));
  CHECK(aligned.column.at(2, 0) == 0.0);
  CHECK(aligned.column.at(4, 0) == 0.0);
  CHECK(aligned.skipped_tickers == std::vector<std::string>{"ZZZ"});

  EventSeries unsorted{EventKind::sentiment, {{t0 + std::chrono::minutes{28}, "AAPL", 0.4}, {t0, "AAPL", 0.8}}};
  CHECK_THROWS_AS(align_events(table, unsorted, "s"), DataError);
}

TEST_CASE("quarter-end fundamentals become effective on the first of the third month after") {
  CHECK(fundamental_effective_time(make_date(2022, 6, 30)) == make_date(2022, 9, 1));
  CHECK(fundamental_effective_time(make_date(2022, 12, 31)) == make_date(2023, 3, 1));
  std::vector<Bar> bars;
  for (int k = 0; k < 120; ++k) {
    auto d = make_date(2022, 7, 1) + std::chrono::days{k};
    auto wd = std::chrono::weekday{std::chrono::sys_days{std::chrono::floor<std::chrono::days>(d)}};
    if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) continue;
    bars.push_back(flat_bar(d, "AAPL", 100));
  }
  auto table = BarTable::from_bars(std::chrono::days{1}, bars);
  EventSeries eps{EventKind::fundamental, {{make_date(2022, 6, 30), "AAPL", 1.25}}};
  auto col = align_events(table, eps, "eps").column;
  for (std::size_t t = 0; t < table.num_steps(); ++t) {
    if (table.calendar()[t] < make_date(2022, 9, 1)) CHECK(col.at(t, 0) == 0.0);
    else CHECK(col.at(t, 0) == 1.25);
  }
}

TEST_CASE("event files round-trip") {
  auto dir = scratch_dir("events");
  auto path = write_file(dir / "ev.csv",
                         "enter_time,ticker,value\n2022-01-04T10:00:00+00:00,B,2\n2022-01-03T10:00:00+00:00,A,1.5\n");
  auto es = read_events_csv(path, EventKind::sentiment);
  REQUIRE(es.events.size() == 2);
  CHECK(es.events[0].ticker == "A");
  std::ostringstream out;
  write_events_csv(es, out);
  CHECK(out.str() == "enter_time,ticker,value\n2022-01-03T10:00:00+00:00,A,1.5\n2022-01-04T10:00:00+00:00,B,2\n");
  CHECK_THROWS_AS(read_events_csv(write_file(dir / "bad.csv", "time,ticker,value\n"), EventKind::sentiment), DataError);
}
