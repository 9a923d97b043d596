#pragma once

// Price ingestion, return construction, calendar splits and a seeded
// synthetic market.
//
// CSV schema: header `date,<TICKER1>,...,<TICKERN>`; ISO-8601 dates; decimal
// prices; an empty cell is a missing price; comma separated, UTF-8.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pt {

using Date = std::chrono::year_month_day;

Date parse_date(std::string_view text);
std::string format_date(const Date& d);

// Dates strictly increase; present prices are positive; missing cells are NaN.
struct PriceTable {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<double> prices;  // row-major, dates x tickers

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return tickers.size(); }
  double at(std::size_t r, std::size_t c) const { return prices[r * cols() + c]; }
  static bool missing(double price);
};

// Daily arithmetic returns; row t is dated at the later of its two prices.
struct ReturnTable {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<double> returns;  // row-major, dates x tickers

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return tickers.size(); }
  double at(std::size_t r, std::size_t c) const { return returns[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(returns).subspan(r * cols(), cols());
  }
  // Row-major block of rows [begin, end).
  std::span<const double> block(std::size_t begin, std::size_t end) const {
    return std::span<const double>(returns).subspan(begin * cols(), (end - begin) * cols());
  }
  std::optional<std::size_t> index_of(const Date& d) const;
};

PriceTable read_prices_csv(std::istream& in, std::string_view source = "<stream>");
PriceTable load_csv(const std::filesystem::path& path);
void write_prices_csv(std::ostream& out, const PriceTable& table);
void save_csv(const std::filesystem::path& path, const PriceTable& table);

// Forward-fills gaps, drops rows before every ticker has a first
// observation, then takes p_t / p_{t-1} - 1 column by column.
ReturnTable clean_and_return(const PriceTable& table);

// One walk-forward split in return-table row indices. Training uses rows
// [0, train_end) of which [valid_begin, train_end) is the validation tail;
// the test year is [test_begin, test_end) with test_begin == train_end.
struct Split {
  int test_year = 0;
  std::size_t train_end = 0;
  std::size_t valid_begin = 0;
  std::size_t test_begin = 0;
  std::size_t test_end = 0;
};

struct WalkForwardSchedule {
  std::vector<Split> splits;
};

// One split per calendar year from `first_test_year` through the last
// complete year in the table. A year is complete when later data exists or
// its last row falls on or after December 24.
WalkForwardSchedule yearly_splits(const ReturnTable& table, int first_test_year,
                                  double validation_fraction = 0.10);

// Monday-to-Friday calendar starting at the first weekday on or after `start`.
std::vector<Date> business_days(const Date& start, std::size_t count);

struct SynthConfig {
  std::size_t n_assets = 4;
  std::size_t n_days = 2500;  // price rows
  std::uint64_t seed = 0;
  Date start = Date{std::chrono::year{2010}, std::chrono::January, std::chrono::day{1}};
  double drift_min = -0.0002;
  double drift_max = 0.0004;
  double vol_min = 0.006;
  double vol_max = 0.015;
  // Each day's return gets momentum * (mean of the asset's previous
  // `momentum_lookback` returns) on top of drift and noise.
  double momentum = 0.0;
  std::size_t momentum_lookback = 5;

  void validate() const;
};

// Geometric random walk prices starting at 100 on a business-day calendar.
PriceTable synth_generate(const SynthConfig& cfg);

}  // namespace pt
