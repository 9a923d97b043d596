#include "pt/objective.hpp"

#include <string>

#include "pt/errors.hpp"

namespace pt {

void CostModel::validate() const {
  if (!(rate >= 0.0)) throw ContractError("cost rate must be non-negative");
}

double arithmetic_return(double p_now, double p_prev) {
  if (!(p_prev > 0.0)) {
    throw DataError("non-positive previous price " + std::to_string(p_prev));
  }
  return p_now / p_prev - 1.0;
}

Tensor portfolio_returns(const Tensor& weights, const ReturnsWindow& window,
                         const CostModel& costs) {
  costs.validate();
  const Tensor& realized = window.realized;
  if (weights.rank() != 2 || weights.shape() != realized.shape()) {
    throw DimensionError("portfolio_returns: weights " + shape_str(weights.shape()) +
                         " vs realized returns " + shape_str(realized.shape()));
  }
  const std::size_t rows = weights.rows();
  const std::size_t n = weights.cols();
  const Tensor gross = sum(mul(weights, realized), 1);
  if (costs.rate == 0.0) return gross;

  Tensor prev;
  if (window.prev_weights.empty()) {
    prev = Tensor::zeros({1, n});
  } else if (window.prev_weights.size() == n) {
    prev = Tensor::from({1, n}, window.prev_weights);
  } else {
    throw DimensionError("portfolio_returns: prev_weights has " +
                         std::to_string(window.prev_weights.size()) + " entries, expected " +
                         std::to_string(n));
  }
  const Tensor lagged = rows > 1 ? concat({prev, slice_rows(weights, 0, rows - 1)}, 0) : prev;
  const Tensor turnover = sum(abs(sub(weights, lagged)), 1);
  return sub(gross, scale(turnover, costs.rate));
}

Tensor sharpe(const Tensor& returns, double eps) {
  if (returns.size() < 2) throw ContractError("sharpe: need at least two returns");
  const Tensor m = mean(returns);
  const Tensor m2 = mean(mul(returns, returns));
  const Tensor variance = sub(m2, mul(m, m));
  return div(m, sqrt(clamp_min(variance, eps)));
}

Tensor sharpe_loss(const Tensor& weights, const ReturnsWindow& window, const CostModel& costs) {
  return neg(sharpe(portfolio_returns(weights, window, costs)));
}

}  // namespace pt
