#include "pt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pt/errors.hpp"

namespace pt {
namespace {

using namespace std::chrono;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string at_line(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

}  // namespace

Date parse_date(std::string_view text) {
  auto bad = [&] { return DataError("invalid date '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::string_view part, auto& value) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size()) throw bad();
  };
  parse(text.substr(0, 4), y);
  parse(text.substr(5, 2), m);
  parse(text.substr(8, 2), d);
  const Date date{year{y}, month{m}, day{d}};
  if (!date.ok()) throw bad();
  return date;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

bool PriceTable::missing(double price) { return std::isnan(price); }

std::optional<std::size_t> ReturnTable::index_of(const Date& d) const {
  const auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates.begin());
}

PriceTable read_prices_csv(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(std::string(source) + ": empty file");
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "date") {
    throw DataError(at_line(source, line_no) + "header must be 'date,<TICKER>,...'");
  }
  PriceTable table;
  std::set<std::string_view> seen;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].empty()) throw DataError(at_line(source, line_no) + "empty ticker name");
    if (!seen.insert(header[i]).second) {
      throw DataError(at_line(source, line_no) + "duplicate ticker '" + std::string(header[i]) +
                      "'");
    }
    table.tickers.emplace_back(header[i]);
  }
  const std::size_t n = table.tickers.size();

  struct Row {
    Date date;
    std::vector<double> prices;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n + 1) {
      throw DataError(at_line(source, line_no) + "expected " + std::to_string(n + 1) +
                      " fields, got " + std::to_string(fields.size()));
    }
    Row row;
    try {
      row.date = parse_date(fields[0]);
    } catch (const DataError& e) {
      throw DataError(at_line(source, line_no) + e.what());
    }
    row.prices.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) {
      const std::string_view cell = fields[i];
      if (cell.empty()) {
        row.prices.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw DataError(at_line(source, line_no) + "malformed price '" + std::string(cell) +
                        "' for " + table.tickers[i - 1]);
      }
      if (value <= 0.0) {
        throw DataError(at_line(source, line_no) + "non-positive price " + std::string(cell) +
                        " for " + table.tickers[i - 1]);
      }
      row.prices.push_back(value);
    }
    rows.push_back(std::move(row));
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].date == rows[i - 1].date) {
      throw DataError(std::string(source) + ": duplicate date " + format_date(rows[i].date));
    }
  }
  table.dates.reserve(rows.size());
  table.prices.reserve(rows.size() * n);
  for (const Row& r : rows) {
    table.dates.push_back(r.date);
    table.prices.insert(table.prices.end(), r.prices.begin(), r.prices.end());
  }
  return table;
}

PriceTable load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_prices_csv(in, path.string());
}

void write_prices_csv(std::ostream& out, const PriceTable& table) {
  out << "date";
  for (const auto& t : table.tickers) out << ',' << t;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << format_date(table.dates[r]);
    for (std::size_t c = 0; c < table.cols(); ++c) {
      out << ',';
      const double p = table.at(r, c);
      if (PriceTable::missing(p)) continue;
      const auto res = std::to_chars(buf, buf + sizeof buf, p);
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const PriceTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_prices_csv(out, table);
  if (!out) throw DataError("failed writing " + path.string());
}

ReturnTable clean_and_return(const PriceTable& table) {
  const std::size_t n = table.cols(), t = table.rows();
  std::size_t first_full = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t first = t, count = 0;
    for (std::size_t r = 0; r < t; ++r) {
      if (!PriceTable::missing(table.at(r, c))) {
        first = std::min(first, r);
        ++count;
      }
    }
    if (count < 2) {
      throw DataError("ticker " + table.tickers[c] + " has " + std::to_string(count) +
                      " observation(s); at least 2 are needed");
    }
    first_full = std::max(first_full, first);
  }
  if (t - first_full < 2) throw DataError("fewer than two rows with every ticker observed");

  std::vector<double> filled(table.prices.begin() + first_full * n, table.prices.end());
  const std::size_t rows = t - first_full;
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (PriceTable::missing(filled[r * n + c])) filled[r * n + c] = filled[(r - 1) * n + c];

  ReturnTable out;
  out.tickers = table.tickers;
  out.dates.assign(table.dates.begin() + first_full + 1, table.dates.end());
  out.returns.resize((rows - 1) * n);
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out.returns[(r - 1) * n + c] = filled[r * n + c] / filled[(r - 1) * n + c] - 1.0;
  return out;
}

WalkForwardSchedule yearly_splits(const ReturnTable& table, int first_test_year,
                                  double validation_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw ContractError("validation fraction must be in (0, 0.5)");
  }
  if (table.rows() == 0) throw DataError("empty return table");
  const int last_year = static_cast<int>(table.dates.back().year());
  const Date last = table.dates.back();
  const bool last_complete = last >= Date{last.year(), December, day{24}};
  const int final_test_year = last_complete ? last_year : last_year - 1;

  WalkForwardSchedule schedule;
  for (int y = first_test_year; y <= final_test_year; ++y) {
    const Date begin{year{y}, January, day{1}};
    const Date end{year{y + 1}, January, day{1}};
    const auto lo = std::lower_bound(table.dates.begin(), table.dates.end(), begin);
    const auto hi = std::lower_bound(table.dates.begin(), table.dates.end(), end);
    if (lo == hi) continue;
    Split s;
    s.test_year = y;
    s.test_begin = static_cast<std::size_t>(lo - table.dates.begin());
    s.test_end = static_cast<std::size_t>(hi - table.dates.begin());
    s.train_end = s.test_begin;
    const auto valid_rows =
        static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(s.train_end)));
    s.valid_begin = s.train_end - valid_rows;
    schedule.splits.push_back(s);
  }
  if (schedule.splits.empty()) {
    throw DataError("no complete test year at or after " + std::to_string(first_test_year) +
                    " (data ends " + format_date(last) + ")");
  }
  if (schedule.splits.front().train_end == 0) {
    throw DataError("no training data before test year " +
                    std::to_string(schedule.splits.front().test_year));
  }
  return schedule;
}

std::vector<Date> business_days(const Date& start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  sys_days d{start};
  while (out.size() < count) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) out.emplace_back(d);
    d += days{1};
  }
  return out;
}

void SynthConfig::validate() const {
  if (n_assets < 1) throw ContractError("synth: n_assets must be at least 1");
  if (n_days < 2) throw ContractError("synth: n_days must be at least 2");
  if (!(vol_min > 0.0) || vol_max < vol_min) throw ContractError("synth: need 0 < vol_min <= vol_max");
  if (drift_max < drift_min) throw ContractError("synth: need drift_min <= drift_max");
  if (momentum_lookback < 1) throw ContractError("synth: momentum_lookback must be at least 1");
  if (!start.ok()) throw ContractError("synth: invalid start date");
}

PriceTable synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> drift_dist(cfg.drift_min, cfg.drift_max);
  std::uniform_real_distribution<double> vol_dist(cfg.vol_min, cfg.vol_max);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = cfg.n_assets, t = cfg.n_days, lb = cfg.momentum_lookback;
  std::vector<double> drift(n), vol(n);
  for (std::size_t i = 0; i < n; ++i) {
    drift[i] = drift_dist(rng);
    vol[i] = vol_dist(rng);
  }

  PriceTable table;
  table.dates = business_days(cfg.start, t);
  for (std::size_t i = 0; i < n; ++i) table.tickers.push_back("S" + std::to_string(i + 1));
  table.prices.resize(t * n);

  // Ring buffer of each asset's recent returns for the momentum term.
  std::vector<double> recent(lb * n, 0.0);
  std::vector<double> price(n, 100.0);
  for (std::size_t i = 0; i < n; ++i) table.prices[i] = price[i];
  for (std::size_t r = 1; r < t; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      double trailing = 0.0;
      for (std::size_t k = 0; k < lb; ++k) trailing += recent[k * n + i];
      trailing /= static_cast<double>(lb);
      double ret = drift[i] + cfg.momentum * trailing + vol[i] * noise(rng);
      ret = std::max(ret, -0.95);
      recent[(r % lb) * n + i] = ret;
      price[i] *= 1.0 + ret;
      table.prices[r * n + i] = price[i];
    }
  }
  return table;
}

}  // namespace pt
