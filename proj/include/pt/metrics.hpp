#pragma once

// Out-of-sample evaluation: realized equity curves, summary statistics and
// rolling Sharpe, plus their on-disk forms.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pt/data.hpp"
#include "pt/objective.hpp"

namespace pt {

inline constexpr double kTradingDaysPerYear = 252.0;

// Dated allocations; weights is row-major, dates x tickers. A row dated D is
// held over the next trading day after D.
struct WeightStream {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<double> weights;

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return tickers.size(); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(weights).subspan(r * cols(), cols());
  }
  void append(const Date& d, std::span<const double> w);
};

struct EquityCurve {
  std::vector<Date> dates;
  std::vector<double> daily_returns;
  std::vector<double> cumulative;  // running product of (1 + R)

  // Throws NumericError if any return is <= -1.
  static EquityCurve from_returns(std::vector<Date> dates, std::vector<double> returns);
  std::size_t size() const { return dates.size(); }
};

struct MetricsReport {
  double returns = 0.0;
  double vol = 0.0;
  double sharpe = 0.0;
  double sortino = 0.0;
  double mdd = 0.0;
  double calmar = 0.0;
  double pct_positive = 0.0;
};

// Column names in report order.
const std::vector<std::string>& metric_names();
std::vector<double> metric_values(const MetricsReport& m);

// Largest (peak - trough) / peak along the curve.
double max_drawdown(std::span<const double> cumulative);

// Annualised mean / sd with population sd; a zero sd yields +-inf by the
// sign of the mean (0 for a zero mean).
double annualized_sharpe(std::span<const double> returns);

// Needs at least two returns. Drawdown counts from the starting capital of 1.
MetricsReport compute_metrics(const EquityCurve& curve);

struct DatedSeries {
  std::vector<Date> dates;
  std::vector<double> values;
};

// Annualised Sharpe of each trailing `window` of returns, dated at the
// window's last day. Throws ContractError when the curve is shorter.
DatedSeries rolling_sharpe(const EquityCurve& curve, std::size_t window = 252);

// Applies the cost-adjusted daily return to each weight row against the
// return row dated one trading day later. The first row trades from zero.
// Throws AlignmentError naming the first weight date that has no next day.
EquityCurve run_backtest(const WeightStream& weights, const ReturnTable& returns,
                         const CostModel& costs);

// Shortest decimal that reads back to the same double.
std::string format_double(double v);

// Flat JSON object; non-finite values are written as the strings "inf",
// "-inf" or "nan".
void write_metrics_json(std::ostream& out, const MetricsReport& m);
MetricsReport read_metrics_json(std::istream& in);

void write_series_csv(std::ostream& out, const DatedSeries& series);
DatedSeries equity_series(const EquityCurve& curve);

}  // namespace pt
