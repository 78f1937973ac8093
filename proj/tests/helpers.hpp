#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "quantgym/quantgym.hpp"

namespace qt {

using namespace quantgym;

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("quantgym_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path.string();
}

inline std::string data_path(const std::string& rel) { return std::string(QG_SOURCE_DIR) + "/" + rel; }

inline Timestamp day(int k) { return make_date(2022, 1, 3) + std::chrono::days{k}; }

inline Bar flat_bar(Timestamp t, const std::string& ticker, double price, double volume = 1000.0) {
  return {t, ticker, price, price, price, price, volume, false};
}

// Dense random-walk table with consistent OHLC.
inline BarTable random_table(std::mt19937_64& rng, std::size_t T, std::size_t n, double vol = 0.02) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Bar> bars;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string tk = "T" + std::to_string(10 + i);
    double close = 20.0 + 80.0 * u(rng);
    for (std::size_t t = 0; t < T; ++t) {
      const double open = close * (1.0 + vol / 4 * nd(rng));
      close = close * std::exp(vol * nd(rng));
      const double high = std::max(open, close) * (1.0 + vol * u(rng));
      const double low = std::min(open, close) * (1.0 - vol * u(rng) / 2);
      bars.push_back({day(static_cast<int>(t)), tk, open, high, low, close, 1000.0 + 100.0 * u(rng), false});
    }
  }
  return BarTable::from_bars(std::chrono::days{1}, bars);
}

// Table where every bar has o=h=l=c from the given close matrix (rows = time).
inline BarTable table_from_closes(const std::vector<std::vector<double>>& closes) {
  std::vector<Bar> bars;
  for (std::size_t t = 0; t < closes.size(); ++t)
    for (std::size_t i = 0; i < closes[t].size(); ++i)
      bars.push_back(flat_bar(day(static_cast<int>(t)), "T" + std::to_string(10 + i), closes[t][i]));
  return BarTable::from_bars(std::chrono::days{1}, bars);
}

inline MarketDataPtr market(const BarTable& table, std::vector<IndicatorSpec> specs = {IndicatorSpec::parse("sma_2")},
                            std::map<std::string, std::vector<double>> risk = {}) {
  auto fm = compute_feature_matrix(table, specs);
  return std::make_shared<const MarketData>(table, std::move(fm), std::move(risk));
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace qt
