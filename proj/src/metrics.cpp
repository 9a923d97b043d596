#include "pt/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "pt/errors.hpp"

namespace pt {
namespace {

double signed_sentinel(double sign) {
  if (sign > 0.0) return std::numeric_limits<double>::infinity();
  if (sign < 0.0) return -std::numeric_limits<double>::infinity();
  return 0.0;
}

// A dispersion this small relative to the mean is rounding noise from a
// constant stream, not risk.
bool negligible(double dispersion, double mean) {
  return dispersion <= 1e-15 + 1e-12 * std::fabs(mean);
}

double mean_of(std::span<const double> r) {
  double s = 0.0;
  for (double x : r) s += x;
  return s / static_cast<double>(r.size());
}

double population_sd(std::span<const double> r, double mean) {
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(r.size()));
}

nlohmann::ordered_json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double from_json_number(const nlohmann::ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw DataError("unexpected metric value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

void WeightStream::append(const Date& d, std::span<const double> w) {
  if (w.size() != cols()) throw DimensionError("weight row has wrong width");
  dates.push_back(d);
  weights.insert(weights.end(), w.begin(), w.end());
}

EquityCurve EquityCurve::from_returns(std::vector<Date> dates, std::vector<double> returns) {
  if (dates.size() != returns.size()) throw DimensionError("equity curve: dates and returns differ");
  EquityCurve c;
  c.cumulative.reserve(returns.size());
  double equity = 1.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    if (!(returns[i] > -1.0)) {
      throw NumericError("daily return " + format_double(returns[i]) + " on " +
                         format_date(dates[i]) + " wipes out the portfolio");
    }
    equity *= 1.0 + returns[i];
    c.cumulative.push_back(equity);
  }
  c.dates = std::move(dates);
  c.daily_returns = std::move(returns);
  return c;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"returns", "vol",    "sharpe",      "sortino",
                                              "mdd",     "calmar", "pct_positive"};
  return names;
}

std::vector<double> metric_values(const MetricsReport& m) {
  return {m.returns, m.vol, m.sharpe, m.sortino, m.mdd, m.calmar, m.pct_positive};
}

double max_drawdown(std::span<const double> cumulative) {
  double peak = -std::numeric_limits<double>::infinity(), worst = 0.0;
  for (double v : cumulative) {
    peak = std::max(peak, v);
    worst = std::max(worst, (peak - v) / peak);
  }
  return worst;
}

double annualized_sharpe(std::span<const double> returns) {
  const double mu = mean_of(returns);
  const double sd = population_sd(returns, mu);
  if (negligible(sd, mu)) return signed_sentinel(mu);
  return mu / sd * std::sqrt(kTradingDaysPerYear);
}

MetricsReport compute_metrics(const EquityCurve& curve) {
  const std::span<const double> r = curve.daily_returns;
  if (r.size() < 2) throw ContractError("metrics need at least two daily returns");
  const double mu = mean_of(r);
  const double sd = population_sd(r, mu);
  double down = 0.0;
  std::size_t positive = 0;
  for (double x : r) {
    const double neg = std::min(x, 0.0);
    down += neg * neg;
    if (x > 0.0) ++positive;
  }
  const double downside = std::sqrt(down / static_cast<double>(r.size()));
  const double root = std::sqrt(kTradingDaysPerYear);

  std::vector<double> equity;
  equity.reserve(curve.cumulative.size() + 1);
  equity.push_back(1.0);
  equity.insert(equity.end(), curve.cumulative.begin(), curve.cumulative.end());

  MetricsReport m;
  m.returns = mu * kTradingDaysPerYear;
  m.vol = sd * root;
  m.sharpe = negligible(sd, mu) ? signed_sentinel(mu) : mu / sd * root;
  m.sortino = negligible(downside, mu) ? signed_sentinel(mu) : mu / downside * root;
  m.mdd = max_drawdown(equity);
  m.calmar = m.mdd > 0.0 ? m.returns / m.mdd : signed_sentinel(m.returns);
  m.pct_positive = static_cast<double>(positive) / static_cast<double>(r.size());
  return m;
}

DatedSeries rolling_sharpe(const EquityCurve& curve, std::size_t window) {
  if (window < 2) throw ContractError("rolling window must be at least 2");
  if (curve.size() < window) {
    throw ContractError("curve of " + std::to_string(curve.size()) +
                        " days is shorter than the rolling window " + std::to_string(window));
  }
  DatedSeries out;
  const std::span<const double> r = curve.daily_returns;
  for (std::size_t end = window; end <= r.size(); ++end) {
    out.dates.push_back(curve.dates[end - 1]);
    out.values.push_back(annualized_sharpe(r.subspan(end - window, window)));
  }
  return out;
}

EquityCurve run_backtest(const WeightStream& weights, const ReturnTable& returns,
                         const CostModel& costs) {
  costs.validate();
  if (weights.tickers != returns.tickers) {
    throw AlignmentError("weight stream tickers do not match the return table");
  }
  const std::size_t n = weights.cols();
  std::vector<Date> dates;
  std::vector<double> realized;
  std::vector<double> prev(n, 0.0);
  for (std::size_t k = 0; k < weights.rows(); ++k) {
    const Date& d = weights.dates[k];
    if (k > 0 && !(weights.dates[k - 1] < d)) {
      throw AlignmentError("weight dates not increasing at " + format_date(d));
    }
    const auto idx = returns.index_of(d);
    if (!idx || *idx + 1 >= returns.rows()) {
      throw AlignmentError("no next-day return for weights dated " + format_date(d));
    }
    const auto w = weights.row(k);
    const auto r = returns.row(*idx + 1);
    double gross = 0.0, turnover = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gross += w[i] * r[i];
      turnover += std::fabs(w[i] - prev[i]);
      prev[i] = w[i];
    }
    dates.push_back(returns.dates[*idx + 1]);
    realized.push_back(gross - costs.rate * turnover);
  }
  return EquityCurve::from_returns(std::move(dates), std::move(realized));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_metrics_json(std::ostream& out, const MetricsReport& m) {
  nlohmann::ordered_json j;
  const auto values = metric_values(m);
  for (std::size_t i = 0; i < values.size(); ++i) j[metric_names()[i]] = json_number(values[i]);
  out << j.dump(2) << '\n';
}

MetricsReport read_metrics_json(std::istream& in) {
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics json: ") + e.what());
  }
  auto get = [&](const char* key) {
    if (!j.contains(key)) throw DataError(std::string("metrics json lacks '") + key + "'");
    return from_json_number(j.at(key));
  };
  MetricsReport m;
  m.returns = get("returns");
  m.vol = get("vol");
  m.sharpe = get("sharpe");
  m.sortino = get("sortino");
  m.mdd = get("mdd");
  m.calmar = get("calmar");
  m.pct_positive = get("pct_positive");
  return m;
}

void write_series_csv(std::ostream& out, const DatedSeries& series) {
  out << "date,value\n";
  for (std::size_t i = 0; i < series.dates.size(); ++i)
    out << format_date(series.dates[i]) << ',' << format_double(series.values[i]) << '\n';
}

DatedSeries equity_series(const EquityCurve& curve) { return {curve.dates, curve.cumulative}; }

}  // namespace pt
