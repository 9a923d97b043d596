#pragma once

// Differentiable training objective: cost-adjusted daily portfolio returns
// and the (per-period) Sharpe ratio of those returns.

#include <vector>

#include "pt/tensor.hpp"

namespace pt {

struct CostModel {
  double rate = 0.0002;  // fraction of traded gross exposure, 2 bps

  void validate() const;
};

// Returns earned by a block of weight rows. Row t of `realized` holds the
// asset returns of the day after weight row t was decided. `prev_weights` is
// the allocation held before the first row; empty means a zero portfolio.
struct ReturnsWindow {
  Tensor realized;
  std::vector<double> prev_weights;
};

// p_now / p_prev - 1; throws DataError when p_prev <= 0.
double arithmetic_return(double p_now, double p_prev);

// R_t = sum_i w_{t,i} r_{t,i} - C * sum_i |w_{t,i} - w_{t-1,i}|.
Tensor portfolio_returns(const Tensor& weights, const ReturnsWindow& window,
                         const CostModel& costs);

inline constexpr double kSharpeVarianceEps = 1e-12;

// E[R] / sqrt(max(E[R^2] - E[R]^2, eps)), population moments, not annualised.
Tensor sharpe(const Tensor& returns, double eps = kSharpeVarianceEps);

// Negative Sharpe of the cost-adjusted returns.
Tensor sharpe_loss(const Tensor& weights, const ReturnsWindow& window, const CostModel& costs);

}  // namespace pt
