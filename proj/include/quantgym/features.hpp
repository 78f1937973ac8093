#pragma once

// Technical indicators, turbulence index and event alignment.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "market_data.hpp"
#include "util.hpp"

namespace quantgym {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

enum class IndicatorKind { macd, macd_signal, rsi, cci, adx, sma, ema };

struct IndicatorSpec {
  IndicatorKind kind = IndicatorKind::macd;
  std::vector<int> periods;  // empty means the kind's defaults

  static std::vector<int> default_periods(IndicatorKind kind) {
    switch (kind) {
      case IndicatorKind::macd:
      case IndicatorKind::macd_signal: return {12, 26, 9};
      case IndicatorKind::rsi: return {14};
      case IndicatorKind::cci: return {20};
      case IndicatorKind::adx: return {14};
      case IndicatorKind::sma:
      case IndicatorKind::ema: return {20};
    }
    return {};
  }

  std::vector<int> resolved_periods() const {
    auto p = periods.empty() ? default_periods(kind) : periods;
    if (p.size() != default_periods(kind).size())
      throw ConfigError("indicator " + base_name() + " expects " + std::to_string(default_periods(kind).size()) +
                        " period(s)");
    for (int v : p)
      if (v < 1) throw ConfigError("indicator periods must be >= 1");
    if ((kind == IndicatorKind::macd || kind == IndicatorKind::macd_signal) && p[0] >= p[1])
      throw ConfigError("macd fast period must be shorter than slow period");
    return p;
  }

  std::string base_name() const {
    switch (kind) {
      case IndicatorKind::macd: return "macd";
      case IndicatorKind::macd_signal: return "macds";
      case IndicatorKind::rsi: return "rsi";
      case IndicatorKind::cci: return "cci";
      case IndicatorKind::adx: return "adx";
      case IndicatorKind::sma: return "sma";
      case IndicatorKind::ema: return "ema";
    }
    return "?";
  }

  // Feature name, e.g. "macd", "rsi_14", "sma_5". MACD with default periods is plain "macd".
  std::string name() const {
    auto p = resolved_periods();
    if ((kind == IndicatorKind::macd || kind == IndicatorKind::macd_signal) && p == default_periods(kind))
      return base_name();
    std::string out = base_name();
    for (int v : p) out += "_" + std::to_string(v);
    return out;
  }

  // First index (0-based) at which the indicator is defined.
  std::size_t warmup() const {
    auto p = resolved_periods();
    switch (kind) {
      case IndicatorKind::macd: return static_cast<std::size_t>(p[1] - 1);
      case IndicatorKind::macd_signal: return static_cast<std::size_t>(p[1] - 1 + p[2] - 1);
      case IndicatorKind::rsi: return static_cast<std::size_t>(p[0]);
      case IndicatorKind::cci: return static_cast<std::size_t>(p[0] - 1);
      case IndicatorKind::adx: return static_cast<std::size_t>(2 * p[0] - 1);
      case IndicatorKind::sma:
      case IndicatorKind::ema: return static_cast<std::size_t>(p[0] - 1);
    }
    return 0;
  }

  // Parses "rsi", "rsi_14", "macd_12_26_9", ...
  static IndicatorSpec parse(std::string_view text) {
    auto parts = util::split(util::to_lower(util::trim(text)), '_');
    IndicatorSpec spec;
    const std::string& k = parts[0];
    if (k == "macd") spec.kind = IndicatorKind::macd;
    else if (k == "macds") spec.kind = IndicatorKind::macd_signal;
    else if (k == "rsi") spec.kind = IndicatorKind::rsi;
    else if (k == "cci") spec.kind = IndicatorKind::cci;
    else if (k == "adx") spec.kind = IndicatorKind::adx;
    else if (k == "sma") spec.kind = IndicatorKind::sma;
    else if (k == "ema") spec.kind = IndicatorKind::ema;
    else throw ConfigError("unknown indicator kind: " + std::string(text));
    for (std::size_t i = 1; i < parts.size(); ++i) {
      auto v = util::parse_int(parts[i]);
      if (!v) throw ConfigError("bad indicator period in: " + std::string(text));
      spec.periods.push_back(static_cast<int>(*v));
    }
    spec.resolved_periods();
    return spec;
  }
};

// One per-(t, ticker) series aligned to a table calendar. values is T x n, row-major;
// entries before warmup are NaN.
struct FeatureColumn {
  std::string name;
  std::vector<Timestamp> calendar;
  std::size_t num_tickers = 0;
  std::vector<double> values;
  std::size_t warmup = 0;

  double at(std::size_t t, std::size_t i) const { return values[t * num_tickers + i]; }
};

namespace indicators {

// Mean of x[lo..hi] computed against a reference point so that constant windows are exact.
inline double window_mean(std::span<const double> x, std::size_t lo, std::size_t hi) {
  const double ref = x[hi];
  double acc = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) acc += x[k] - ref;
  return ref + acc / static_cast<double>(hi - lo + 1);
}

// EMA with alpha = 2/(p+1), seeded with the first value. Flagged undefined before p-1.
inline std::vector<double> ema(std::span<const double> x, int period, std::size_t start = 0) {
  std::vector<double> out(x.size(), kUndefined);
  if (start >= x.size()) return out;
  const double alpha = 2.0 / (period + 1.0);
  double e = x[start];
  for (std::size_t t = start; t < x.size(); ++t) {
    if (t > start) e += alpha * (x[t] - e);
    if (t + 1 >= start + static_cast<std::size_t>(period)) out[t] = e;
  }
  return out;
}

inline std::vector<double> sma(std::span<const double> x, int period) {
  std::vector<double> out(x.size(), kUndefined);
  const auto p = static_cast<std::size_t>(period);
  for (std::size_t t = p - 1; t < x.size(); ++t) out[t] = window_mean(x, t + 1 - p, t);
  return out;
}

inline std::vector<double> macd(std::span<const double> close, int fast, int slow) {
  auto ef = ema(close, fast);
  auto es = ema(close, slow);
  // the fast EMA is defined earlier; only the slow warmup matters
  std::vector<double> out(close.size(), kUndefined);
  for (std::size_t t = static_cast<std::size_t>(slow - 1); t < close.size(); ++t) out[t] = ef[t] - es[t];
  return out;
}

inline std::vector<double> macd_signal(std::span<const double> close, int fast, int slow, int signal) {
  auto line = macd(close, fast, slow);
  const auto start = static_cast<std::size_t>(slow - 1);
  std::vector<double> seeded(line.size(), 0.0);
  for (std::size_t t = start; t < line.size(); ++t) seeded[t] = line[t];
  return ema(seeded, signal, start);
}

// Wilder RSI; 50 when there is neither gain nor loss, 100 when there is no loss.
inline std::vector<double> rsi(std::span<const double> close, int period) {
  std::vector<double> out(close.size(), kUndefined);
  const auto p = static_cast<std::size_t>(period);
  if (close.size() <= p) return out;
  double gain = 0.0, loss = 0.0;
  for (std::size_t t = 1; t <= p; ++t) {
    double d = close[t] - close[t - 1];
    gain += std::max(d, 0.0);
    loss += std::max(-d, 0.0);
  }
  gain /= period;
  loss /= period;
  auto value = [](double g, double l) {
    if (g == 0.0 && l == 0.0) return 50.0;
    if (l == 0.0) return 100.0;
    return 100.0 - 100.0 / (1.0 + g / l);
  };
  out[p] = value(gain, loss);
  for (std::size_t t = p + 1; t < close.size(); ++t) {
    double d = close[t] - close[t - 1];
    gain = (gain * (period - 1) + std::max(d, 0.0)) / period;
    loss = (loss * (period - 1) + std::max(-d, 0.0)) / period;
    out[t] = value(gain, loss);
  }
  return out;
}

// CCI = (TP - SMA(TP)) / (0.015 * mean absolute deviation); 0 when the deviation vanishes.
inline std::vector<double> cci(std::span<const double> high, std::span<const double> low,
                               std::span<const double> close, int period) {
  const std::size_t T = close.size();
  const auto p = static_cast<std::size_t>(period);
  std::vector<double> tp(T);
  for (std::size_t t = 0; t < T; ++t) tp[t] = (high[t] + low[t] + close[t]) / 3.0;
  std::vector<double> out(T, kUndefined);
  for (std::size_t t = p - 1; t < T; ++t) {
    double m = window_mean(tp, t + 1 - p, t);
    double mad = 0.0;
    for (std::size_t k = t + 1 - p; k <= t; ++k) mad += std::abs(tp[k] - m);
    mad /= period;
    out[t] = mad == 0.0 ? 0.0 : (tp[t] - m) / (0.015 * mad);
  }
  return out;
}

// ADX with Wilder smoothing of TR and +/-DM; 0 when the true range vanishes.
inline std::vector<double> adx(std::span<const double> high, std::span<const double> low,
                               std::span<const double> close, int period) {
  const std::size_t T = close.size();
  const auto p = static_cast<std::size_t>(period);
  std::vector<double> out(T, kUndefined);
  if (T < 2 * p) return out;
  std::vector<double> tr(T, 0.0), pdm(T, 0.0), mdm(T, 0.0);
  for (std::size_t t = 1; t < T; ++t) {
    tr[t] = std::max({high[t] - low[t], std::abs(high[t] - close[t - 1]), std::abs(low[t] - close[t - 1])});
    double up = high[t] - high[t - 1];
    double down = low[t - 1] - low[t];
    pdm[t] = (up > down && up > 0.0) ? up : 0.0;
    mdm[t] = (down > up && down > 0.0) ? down : 0.0;
  }
  double str = 0.0, spdm = 0.0, smdm = 0.0;
  for (std::size_t t = 1; t <= p; ++t) {
    str += tr[t];
    spdm += pdm[t];
    smdm += mdm[t];
  }
  auto dx = [](double s_tr, double s_p, double s_m) {
    if (s_tr == 0.0) return 0.0;
    double pdi = 100.0 * s_p / s_tr;
    double mdi = 100.0 * s_m / s_tr;
    return (pdi + mdi) == 0.0 ? 0.0 : 100.0 * std::abs(pdi - mdi) / (pdi + mdi);
  };
  std::vector<double> dxs(T, 0.0);
  dxs[p] = dx(str, spdm, smdm);
  for (std::size_t t = p + 1; t < T; ++t) {
    str = str - str / period + tr[t];
    spdm = spdm - spdm / period + pdm[t];
    smdm = smdm - smdm / period + mdm[t];
    dxs[t] = dx(str, spdm, smdm);
  }
  double a = 0.0;
  for (std::size_t t = p; t < 2 * p; ++t) a += dxs[t];
  a /= period;
  out[2 * p - 1] = a;
  for (std::size_t t = 2 * p; t < T; ++t) {
    a = (a * (period - 1) + dxs[t]) / period;
    out[t] = a;
  }
  return out;
}

}  // namespace indicators

inline FeatureColumn compute_indicator(const BarTable& table, const IndicatorSpec& spec) {
  if (!table.dense()) throw DataError("compute_indicator requires a dense (cleaned) table");
  const auto p = spec.resolved_periods();
  const std::size_t T = table.num_steps(), n = table.num_tickers();
  FeatureColumn col{spec.name(), table.calendar(), n, std::vector<double>(T * n, kUndefined), spec.warmup()};
  if (col.warmup >= T)
    throw DataError("indicator " + col.name + " needs more than " + std::to_string(T) + " steps of history");
  std::vector<double> h(T), l(T), c(T);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto& b = table.bar(t, i);
      h[t] = b.high;
      l[t] = b.low;
      c[t] = b.close;
    }
    std::vector<double> s;
    switch (spec.kind) {
      case IndicatorKind::macd: s = indicators::macd(c, p[0], p[1]); break;
      case IndicatorKind::macd_signal: s = indicators::macd_signal(c, p[0], p[1], p[2]); break;
      case IndicatorKind::rsi: s = indicators::rsi(c, p[0]); break;
      case IndicatorKind::cci: s = indicators::cci(h, l, c, p[0]); break;
      case IndicatorKind::adx: s = indicators::adx(h, l, c, p[0]); break;
      case IndicatorKind::sma: s = indicators::sma(c, p[0]); break;
      case IndicatorKind::ema: s = indicators::ema(c, p[0]); break;
    }
    for (std::size_t t = 0; t < T; ++t) col.values[t * n + i] = s[t];
  }
  return col;
}

// Per-(t, ticker, feature) tensor consumed by the environments.
struct FeatureMatrix {
  std::vector<Timestamp> calendar;
  std::vector<std::string> tickers;
  std::vector<std::string> names;
  std::vector<double> values;  // T x n x I
  std::size_t warmup = 0;

  std::size_t num_steps() const { return calendar.size(); }
  std::size_t num_tickers() const { return tickers.size(); }
  std::size_t num_features() const { return names.size(); }
  double at(std::size_t t, std::size_t i, std::size_t k) const {
    return values[(t * tickers.size() + i) * names.size() + k];
  }
  std::span<const double> row(std::size_t t) const {
    const std::size_t w = tickers.size() * names.size();
    return {values.data() + t * w, w};
  }

  FeatureMatrix slice(std::size_t begin, std::size_t end) const {
    FeatureMatrix out;
    end = std::min(end, calendar.size());
    begin = std::min(begin, end);
    out.calendar.assign(calendar.begin() + static_cast<std::ptrdiff_t>(begin),
                        calendar.begin() + static_cast<std::ptrdiff_t>(end));
    out.tickers = tickers;
    out.names = names;
    const std::size_t w = tickers.size() * names.size();
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * w),
                      values.begin() + static_cast<std::ptrdiff_t>(end * w));
    out.warmup = warmup > begin ? warmup - begin : 0;
    return out;
  }
};

inline FeatureMatrix compute_feature_matrix(const BarTable& table, const std::vector<IndicatorSpec>& specs,
                                            const std::vector<FeatureColumn>& extra_columns = {}) {
  if (specs.empty() && extra_columns.empty())
    throw ConfigError("feature matrix needs at least one feature");
  std::vector<FeatureColumn> cols;
  for (const auto& s : specs) cols.push_back(compute_indicator(table, s));
  for (const auto& e : extra_columns) {
    if (e.calendar != table.calendar() || e.num_tickers != table.num_tickers())
      throw DataError("feature column '" + e.name + "' is not aligned with the table calendar");
    cols.push_back(e);
  }
  FeatureMatrix fm;
  fm.calendar = table.calendar();
  fm.tickers = table.tickers();
  std::set<std::string> seen;
  for (const auto& c : cols) {
    if (!seen.insert(c.name).second) throw ConfigError("duplicate feature name: " + c.name);
    fm.names.push_back(c.name);
    fm.warmup = std::max(fm.warmup, c.warmup);
  }
  const std::size_t T = fm.num_steps(), n = fm.num_tickers(), I = cols.size();
  fm.values.resize(T * n * I);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < I; ++k) fm.values[(t * n + i) * I + k] = cols[k].at(t, i);
  for (std::size_t t = fm.warmup; t < T; ++t)
    for (std::size_t j = 0; j < n * I; ++j)
      if (!std::isfinite(fm.values[t * n * I + j]))
        throw DataError("non-finite feature value after warmup at " + format_timestamp(fm.calendar[t]));
  return fm;
}

inline void write_csv(const FeatureMatrix& fm, std::ostream& out) {
  out << "timestamp,ticker";
  for (const auto& nm : fm.names) out << ',' << nm;
  out << '\n';
  for (std::size_t t = fm.warmup; t < fm.num_steps(); ++t)
    for (std::size_t i = 0; i < fm.num_tickers(); ++i) {
      out << format_timestamp(fm.calendar[t]) << ',' << fm.tickers[i];
      for (std::size_t k = 0; k < fm.num_features(); ++k) out << ',' << util::format_double(fm.at(t, i, k));
      out << '\n';
    }
}

struct TurbulenceOptions {
  std::size_t window = 252;
  // Rescales d_t by (w-n-2)w/((w+1)(w-1)) so that E[d_t] = n under i.i.d. Gaussian returns.
  bool small_sample_correction = false;
};

// Mahalanobis distance of the cross-asset return vector from its trailing distribution.
struct TurbulenceSeries {
  std::vector<Timestamp> calendar;
  std::vector<double> values;  // NaN where undefined
  std::size_t window = 0;
  std::size_t first_defined = 0;

  bool defined(std::size_t t) const { return t >= first_defined && t < values.size(); }
};

// Simple returns y_t (t >= 1) of a dense table, row-major (T-1) x n.
inline std::vector<double> simple_returns(const BarTable& table) {
  const std::size_t T = table.num_steps(), n = table.num_tickers();
  std::vector<double> y(T > 0 ? (T - 1) * n : 0);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i) y[(t - 1) * n + i] = table.close(t, i) / table.close(t - 1, i) - 1.0;
  return y;
}

// d for a target vector against a window of observations (rows of `window_rows`).
inline double mahalanobis_turbulence(const Eigen::MatrixXd& window_rows, const Eigen::VectorXd& y) {
  const auto w = window_rows.rows();
  const auto n = window_rows.cols();
  Eigen::VectorXd mu = window_rows.colwise().mean().transpose();
  Eigen::MatrixXd centered = window_rows.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(w - 1);
  double eps = 1e-8 * cov.trace() / static_cast<double>(n);
  if (!(eps > 0.0)) eps = 1e-300;
  cov.diagonal().array() += eps;
  Eigen::VectorXd dev = y - mu;
  Eigen::VectorXd sol = cov.ldlt().solve(dev);
  return std::max(0.0, dev.dot(sol));
}

inline TurbulenceSeries turbulence(const BarTable& table, const TurbulenceOptions& opts = {}) {
  const std::size_t T = table.num_steps(), n = table.num_tickers();
  if (n < 1) throw DataError("turbulence needs at least one ticker");
  if (opts.window < n + 2)
    throw ConfigError("turbulence window must be at least n+2 = " + std::to_string(n + 2));
  if (!table.dense()) throw DataError("turbulence requires a dense (cleaned) table");
  TurbulenceSeries out{table.calendar(), std::vector<double>(T, kUndefined), opts.window, opts.window + 1};
  const auto y = simple_returns(table);
  const double w = static_cast<double>(opts.window), nn = static_cast<double>(n);
  const double scale = opts.small_sample_correction ? (w - nn - 2.0) * w / ((w + 1.0) * (w - 1.0)) : 1.0;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(opts.window), static_cast<Eigen::Index>(n));
  Eigen::VectorXd target(static_cast<Eigen::Index>(n));
  // return index r = t-1; window covers returns r-window .. r-1
  for (std::size_t t = opts.window + 1; t < T; ++t) {
    const std::size_t r = t - 1;
    for (std::size_t k = 0; k < opts.window; ++k)
      for (std::size_t i = 0; i < n; ++i)
        rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = y[(r - opts.window + k) * n + i];
    for (std::size_t i = 0; i < n; ++i) target(static_cast<Eigen::Index>(i)) = y[r * n + i];
    out.values[t] = scale * mahalanobis_turbulence(rows, target);
  }
  return out;
}

enum class EventKind { sentiment, fundamental };

struct Event {
  Timestamp enter_time{};
  std::string ticker;
  double value = 0.0;
};

struct EventSeries {
  EventKind kind = EventKind::sentiment;
  std::vector<Event> events;
};

struct AlignedEvents {
  FeatureColumn column;
  std::vector<std::string> skipped_tickers;  // events naming tickers absent from the table
};

// Date at which a fundamental record becomes tradable: two months past the quarter-end
// month, effective from the first day of the following month (06-30 -> 09-01).
inline Timestamp fundamental_effective_time(Timestamp enter_time) {
  using namespace std::chrono;
  year_month_day ymd{floor<days>(enter_time)};
  auto ym = year_month{ymd.year(), ymd.month()} + months{3};
  return Timestamp{sys_days{ym / day{1}}.time_since_epoch()};
}

inline AlignedEvents align_events(const BarTable& table, const EventSeries& series, std::string name) {
  const std::size_t T = table.num_steps(), n = table.num_tickers();
  for (std::size_t k = 1; k < series.events.size(); ++k)
    if (series.events[k].enter_time < series.events[k - 1].enter_time)
      throw DataError("events must be sorted by enter_time");
  AlignedEvents out{{std::move(name), table.calendar(), n, std::vector<double>(T * n, 0.0), 0}, {}};
  std::set<std::string> skipped;
  const auto& cal = table.calendar();
  if (series.kind == EventKind::sentiment) {
    std::vector<double> sum(T * n, 0.0), cnt(T * n, 0.0);
    for (const auto& e : series.events) {
      auto idx = table.ticker_index(e.ticker);
      if (!idx) {
        skipped.insert(e.ticker);
        continue;
      }
      // bin t covers (cal[t-1], cal[t]]; the first bin is one bar interval wide
      auto it = std::lower_bound(cal.begin(), cal.end(), e.enter_time);
      if (it == cal.end()) continue;
      auto t = static_cast<std::size_t>(it - cal.begin());
      Timestamp lo = t == 0 ? cal[0] - table.frequency() : cal[t - 1];
      if (!(e.enter_time > lo)) continue;
      sum[t * n + *idx] += e.value;
      cnt[t * n + *idx] += 1.0;
    }
    for (std::size_t j = 0; j < T * n; ++j)
      if (cnt[j] > 0) out.column.values[j] = sum[j] / cnt[j];
  } else {
    std::vector<std::vector<std::pair<Timestamp, double>>> per(n);
    for (const auto& e : series.events) {
      auto idx = table.ticker_index(e.ticker);
      if (!idx) {
        skipped.insert(e.ticker);
        continue;
      }
      per[*idx].emplace_back(fundamental_effective_time(e.enter_time), e.value);
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t k = 0;
      double current = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        while (k < per[i].size() && per[i][k].first <= cal[t]) current = per[i][k++].second;
        out.column.values[t * n + i] = current;
      }
    }
  }
  out.skipped_tickers.assign(skipped.begin(), skipped.end());
  return out;
}

// CSV `enter_time,ticker,value`; rows are sorted by enter_time (stable) after reading.
inline EventSeries read_events_csv(const std::string& path, EventKind kind) {
  auto lines = util::read_lines(path);
  if (lines.empty() || util::trim(lines[0]) != "enter_time,ticker,value")
    throw DataError(path + ": header must be 'enter_time,ticker,value'");
  EventSeries es{kind, {}};
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (util::trim(lines[ln]).empty()) continue;
    auto f = util::split(lines[ln], ',');
    std::string where = path + ":" + std::to_string(ln + 1);
    if (f.size() != 3) throw DataError(where + ": malformed row");
    auto ts = parse_timestamp(f[0]);
    if (!ts) throw DataError(where + ": unparsable timestamp");
    auto v = util::parse_double(f[2]);
    if (!v || !std::isfinite(*v)) throw DataError(where + ": bad value");
    es.events.push_back({*ts, std::string(util::trim(f[1])), *v});
  }
  std::stable_sort(es.events.begin(), es.events.end(),
                   [](const Event& a, const Event& b) { return a.enter_time < b.enter_time; });
  return es;
}

inline void write_events_csv(const EventSeries& es, std::ostream& out) {
  out << "enter_time,ticker,value\n";
  for (const auto& e : es.events)
    out << format_timestamp(e.enter_time) << ',' << e.ticker << ',' << util::format_double(e.value) << '\n';
}

}  // namespace quantgym
