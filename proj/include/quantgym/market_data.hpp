#pragma once

// OHLCV ingestion, cleaning, merging and splitting.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "util.hpp"

namespace quantgym {

struct Bar {
  Timestamp timestamp{};
  std::string ticker;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
  bool synthetic = false;  // produced by the fill rule, not observed

  friend bool operator==(const Bar&, const Bar&) = default;
};

// Empty string when the bar is valid, otherwise a description of the violation.
inline std::string validate_bar(const Bar& b) {
  for (double p : {b.open, b.high, b.low, b.close}) {
    if (!std::isfinite(p) || p <= 0.0) return "non-positive price";
  }
  if (!std::isfinite(b.volume) || b.volume < 0.0) return "negative volume";
  if (b.low > std::min(b.open, b.close) || b.high < std::max(b.open, b.close) || b.low > b.high)
    return "inconsistent high/low";
  return {};
}

// Calendar-aligned OHLCV panel: cell(t, i) holds the bar of tickers()[i] at calendar()[t].
// Tickers are kept in lexicographic order and the calendar strictly increasing.
class BarTable {
 public:
  using Cell = std::optional<Bar>;

  BarTable() = default;

  BarTable(Duration frequency, std::vector<std::string> tickers, std::vector<Timestamp> calendar,
           std::vector<Cell> cells)
      : frequency_(frequency),
        tickers_(std::move(tickers)),
        calendar_(std::move(calendar)),
        cells_(std::move(cells)) {
    if (cells_.size() != tickers_.size() * calendar_.size())
      throw DataError("bar grid size does not match calendar x tickers");
    if (!std::is_sorted(tickers_.begin(), tickers_.end()) ||
        std::adjacent_find(tickers_.begin(), tickers_.end()) != tickers_.end())
      throw DataError("tickers must be unique and sorted");
    for (std::size_t t = 1; t < calendar_.size(); ++t)
      if (!(calendar_[t - 1] < calendar_[t])) throw DataError("calendar must be strictly increasing");
  }

  // Builds a (possibly sparse) table from unordered bars; duplicate keys are rejected.
  static BarTable from_bars(Duration frequency, const std::vector<Bar>& bars) {
    std::set<std::string> tick_set;
    std::set<Timestamp> cal_set;
    for (const auto& b : bars) {
      tick_set.insert(b.ticker);
      cal_set.insert(b.timestamp);
    }
    std::vector<std::string> tickers(tick_set.begin(), tick_set.end());
    std::vector<Timestamp> calendar(cal_set.begin(), cal_set.end());
    std::vector<Cell> cells(tickers.size() * calendar.size());
    for (const auto& b : bars) {
      auto t = static_cast<std::size_t>(std::lower_bound(calendar.begin(), calendar.end(), b.timestamp) -
                                        calendar.begin());
      auto i = static_cast<std::size_t>(std::lower_bound(tickers.begin(), tickers.end(), b.ticker) -
                                        tickers.begin());
      auto& c = cells[t * tickers.size() + i];
      if (c) throw DataError("duplicate (ticker, timestamp): " + b.ticker + ", " + format_timestamp(b.timestamp));
      c = b;
    }
    return BarTable(frequency, std::move(tickers), std::move(calendar), std::move(cells));
  }

  Duration frequency() const { return frequency_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::vector<Timestamp>& calendar() const { return calendar_; }
  std::size_t num_steps() const { return calendar_.size(); }
  std::size_t num_tickers() const { return tickers_.size(); }

  const Cell& cell(std::size_t t, std::size_t i) const { return cells_[t * tickers_.size() + i]; }

  const Bar& bar(std::size_t t, std::size_t i) const {
    const auto& c = cell(t, i);
    if (!c) throw DataError("missing bar for " + tickers_[i] + " at " + format_timestamp(calendar_[t]));
    return *c;
  }

  double close(std::size_t t, std::size_t i) const { return bar(t, i).close; }

  std::vector<double> closes(std::size_t t) const {
    std::vector<double> out(tickers_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = close(t, i);
    return out;
  }

  bool dense() const {
    return std::all_of(cells_.begin(), cells_.end(), [](const Cell& c) { return c.has_value(); });
  }

  std::optional<std::size_t> ticker_index(std::string_view ticker) const {
    auto it = std::lower_bound(tickers_.begin(), tickers_.end(), ticker);
    if (it == tickers_.end() || *it != ticker) return std::nullopt;
    return static_cast<std::size_t>(it - tickers_.begin());
  }

  // Rows [begin, end) of the calendar.
  BarTable slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, calendar_.size());
    begin = std::min(begin, end);
    std::vector<Timestamp> cal(calendar_.begin() + static_cast<std::ptrdiff_t>(begin),
                               calendar_.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<Cell> cells(cells_.begin() + static_cast<std::ptrdiff_t>(begin * tickers_.size()),
                            cells_.begin() + static_cast<std::ptrdiff_t>(end * tickers_.size()));
    return BarTable(frequency_, tickers_, std::move(cal), std::move(cells));
  }

  std::vector<Bar> bars() const {
    std::vector<Bar> out;
    for (std::size_t i = 0; i < tickers_.size(); ++i)
      for (std::size_t t = 0; t < calendar_.size(); ++t)
        if (cell(t, i)) out.push_back(*cell(t, i));
    return out;
  }

  friend bool operator==(const BarTable&, const BarTable&) = default;

 private:
  Duration frequency_{86400};
  std::vector<std::string> tickers_;
  std::vector<Timestamp> calendar_;
  std::vector<Cell> cells_;
};

inline constexpr std::string_view kBarCsvHeader = "timestamp,ticker,open,high,low,close,volume";
inline constexpr std::string_view kTickerCsvHeader = "timestamp,open,high,low,close,volume";

namespace detail {

inline Bar parse_bar_fields(const std::vector<std::string>& f, std::size_t ts_col, std::string ticker,
                            const std::string& where) {
  Bar b;
  auto ts = parse_timestamp(f[ts_col]);
  if (!ts) throw DataError(where + ": unparsable timestamp '" + f[ts_col] + "'");
  b.timestamp = *ts;
  b.ticker = std::move(ticker);
  if (b.ticker.empty()) throw DataError(where + ": malformed row (empty ticker)");
  std::size_t base = f.size() - 5;
  double* dst[] = {&b.open, &b.high, &b.low, &b.close, &b.volume};
  for (std::size_t k = 0; k < 5; ++k) {
    auto v = util::parse_double(f[base + k]);
    if (!v) throw DataError(where + ": malformed row (bad number '" + f[base + k] + "')");
    *dst[k] = *v;
  }
  if (auto why = validate_bar(b); !why.empty()) throw DataError(where + ": " + why);
  return b;
}

inline void ingest_lines(const std::vector<std::string>& lines, const std::string& path, std::string_view header,
                         const std::string* fixed_ticker, std::vector<Bar>& out,
                         std::map<std::pair<std::string, Timestamp>, std::string>& seen) {
  if (lines.empty() || util::trim(lines[0]) != header)
    throw DataError(path + ": header must be '" + std::string(header) + "'");
  const std::size_t ncols = fixed_ticker ? 6 : 7;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (util::trim(lines[ln]).empty()) continue;
    std::string where = path + ":" + std::to_string(ln + 1);
    auto f = util::split(lines[ln], ',');
    if (f.size() != ncols) throw DataError(where + ": malformed row (expected " + std::to_string(ncols) + " columns)");
    std::string ticker = fixed_ticker ? *fixed_ticker : std::string(util::trim(f[1]));
    Bar b = parse_bar_fields(f, 0, ticker, where);
    auto key = std::make_pair(b.ticker, b.timestamp);
    if (auto it = seen.find(key); it != seen.end())
      throw DataError(where + ": duplicate (ticker, timestamp) " + b.ticker + ", " + format_timestamp(b.timestamp) +
                      " (first seen at " + it->second + ")");
    seen.emplace(key, where);
    out.push_back(std::move(b));
  }
}

}  // namespace detail

// Reads the long-format CSV `timestamp,ticker,open,high,low,close,volume`.
inline BarTable ingest_csv(const std::string& path, Duration frequency) {
  auto lines = util::read_lines(path);
  std::vector<Bar> bars;
  std::map<std::pair<std::string, Timestamp>, std::string> seen;
  detail::ingest_lines(lines, path, kBarCsvHeader, nullptr, bars, seen);
  return BarTable::from_bars(frequency, bars);
}

// Reads a directory of `<TICKER>.csv` files with header `timestamp,open,high,low,close,volume`.
inline BarTable ingest_directory(const std::string& dir, Duration frequency) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .csv files in " + dir);
  std::vector<Bar> bars;
  std::map<std::pair<std::string, Timestamp>, std::string> seen;
  for (const auto& f : files) {
    std::string ticker = f.stem().string();
    detail::ingest_lines(util::read_lines(f.string()), f.string(), kTickerCsvHeader, &ticker, bars, seen);
  }
  return BarTable::from_bars(frequency, bars);
}

inline BarTable ingest(const std::string& path, Duration frequency) {
  return std::filesystem::is_directory(path) ? ingest_directory(path, frequency) : ingest_csv(path, frequency);
}

inline void write_csv(const BarTable& table, std::ostream& out) {
  out << kBarCsvHeader << '\n';
  for (const auto& b : table.bars()) {
    out << format_timestamp(b.timestamp) << ',' << b.ticker << ',' << util::format_double(b.open) << ','
        << util::format_double(b.high) << ',' << util::format_double(b.low) << ','
        << util::format_double(b.close) << ',' << util::format_double(b.volume) << '\n';
  }
}

inline void write_csv(const BarTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_csv(table, out);
}

enum class CalendarRule { intersection, union_ };
enum class FillRule { forward_backward, drop_ticker };

struct CleaningPolicy {
  CalendarRule calendar_rule = CalendarRule::intersection;
  FillRule fill_rule = FillRule::forward_backward;
  double min_coverage = 0.0;
};

struct CleanResult {
  BarTable table;
  std::vector<std::string> dropped;  // tickers removed by coverage or drop-ticker rule
};

// Produces a dense table on the policy calendar. Filled bars carry o=h=l=c of the
// previous observed close (or, for leading gaps, the next observed open), volume 0.
inline CleanResult clean(const BarTable& table, const CleaningPolicy& policy) {
  if (!(policy.min_coverage >= 0.0 && policy.min_coverage <= 1.0))
    throw ConfigError("min_coverage must lie in [0,1]");
  if (table.num_tickers() < 1 || table.num_steps() < 2)
    throw DataError("clean requires at least one ticker and two timestamps");

  const std::size_t T = table.num_steps();
  CleanResult result;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < table.num_tickers(); ++i) {
    std::size_t present = 0;
    for (std::size_t t = 0; t < T; ++t) present += table.cell(t, i).has_value();
    double coverage = static_cast<double>(present) / static_cast<double>(T);
    if (present == 0 || coverage < policy.min_coverage) result.dropped.push_back(table.tickers()[i]);
    else kept.push_back(i);
  }
  if (kept.empty()) throw DataError("all tickers dropped by cleaning policy");

  auto build_calendar = [&](const std::vector<std::size_t>& ticks) {
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < T; ++t) {
      bool all = true, any = false;
      for (auto i : ticks) {
        bool has = table.cell(t, i).has_value();
        all = all && has;
        any = any || has;
      }
      if (policy.calendar_rule == CalendarRule::intersection ? all : any) rows.push_back(t);
    }
    return rows;
  };

  std::vector<std::size_t> rows = build_calendar(kept);
  if (policy.fill_rule == FillRule::drop_ticker && policy.calendar_rule == CalendarRule::union_) {
    std::vector<std::size_t> full;
    for (auto i : kept) {
      bool complete = std::all_of(rows.begin(), rows.end(), [&](std::size_t t) { return table.cell(t, i).has_value(); });
      if (complete) full.push_back(i);
      else result.dropped.push_back(table.tickers()[i]);
    }
    if (full.empty()) throw DataError("all tickers dropped by cleaning policy");
    kept = std::move(full);
    rows = build_calendar(kept);
  }
  if (rows.empty()) throw DataError("empty calendar after cleaning");
  std::sort(result.dropped.begin(), result.dropped.end());

  std::vector<std::string> tickers;
  for (auto i : kept) tickers.push_back(table.tickers()[i]);
  std::vector<Timestamp> calendar;
  for (auto t : rows) calendar.push_back(table.calendar()[t]);

  const std::size_t n = kept.size();
  std::vector<BarTable::Cell> cells(rows.size() * n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = kept[k];
    std::optional<double> last_close;
    std::vector<std::size_t> leading;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& src = table.cell(rows[r], i);
      auto& dst = cells[r * n + k];
      if (src) {
        dst = *src;
        if (!last_close) {
          for (auto lr : leading) {
            double p = src->open;
            cells[lr * n + k] = Bar{calendar[lr], tickers[k], p, p, p, p, 0.0, true};
          }
          leading.clear();
        }
        last_close = src->close;
      } else if (last_close) {
        double p = *last_close;
        dst = Bar{calendar[r], tickers[k], p, p, p, p, 0.0, true};
      } else {
        leading.push_back(r);
      }
    }
  }
  result.table = BarTable(table.frequency(), std::move(tickers), std::move(calendar), std::move(cells));
  return result;
}

// Union of tickers and calendars; identical duplicate cells are accepted, differing ones rejected.
inline BarTable merge(const std::vector<BarTable>& tables) {
  if (tables.empty()) throw DataError("merge requires at least one table");
  const Duration freq = tables.front().frequency();
  std::map<std::pair<std::string, Timestamp>, Bar> cells;
  for (const auto& tab : tables) {
    if (tab.frequency() != freq) throw DataError("merge: frequency mismatch");
    for (const auto& b : tab.bars()) {
      auto key = std::make_pair(b.ticker, b.timestamp);
      auto [it, inserted] = cells.emplace(key, b);
      if (!inserted && !(it->second == b))
        throw DataError("merge: conflicting cells for " + b.ticker + ", " + format_timestamp(b.timestamp));
    }
  }
  std::vector<Bar> bars;
  bars.reserve(cells.size());
  for (auto& [k, b] : cells) bars.push_back(b);
  return BarTable::from_bars(freq, bars);
}

// Half-open timestamp interval [begin, end).
struct TimeRange {
  Timestamp begin{};
  Timestamp end{};
  bool contains(Timestamp t) const { return begin <= t && t < end; }
};

struct SplitSpec {
  TimeRange train;
  TimeRange test;
  TimeRange trade;
};

struct SplitResult {
  BarTable train;
  BarTable test;
  BarTable trade;
};

inline SplitResult split(const BarTable& table, const SplitSpec& spec) {
  const TimeRange* ranges[] = {&spec.train, &spec.test, &spec.trade};
  const char* names[] = {"train", "test", "trade"};
  for (int k = 0; k < 3; ++k)
    if (!(ranges[k]->begin < ranges[k]->end))
      throw DataError(std::string("split: ") + names[k] + " range is empty");
  if (spec.train.end > spec.test.begin || spec.test.end > spec.trade.begin)
    throw DataError("split: ranges must be disjoint and ordered train < test < trade");
  const auto& cal = table.calendar();
  BarTable parts[3];
  for (int k = 0; k < 3; ++k) {
    auto lo = std::lower_bound(cal.begin(), cal.end(), ranges[k]->begin) - cal.begin();
    auto hi = std::lower_bound(cal.begin(), cal.end(), ranges[k]->end) - cal.begin();
    if (lo >= hi) throw DataError(std::string("split: empty ") + names[k] + " segment");
    parts[k] = table.slice(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

}  // namespace quantgym
