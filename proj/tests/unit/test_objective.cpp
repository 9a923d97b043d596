#include <doctest.h>

#include <cmath>
#include <random>

#include "pt/errors.hpp"
#include "pt/model/sequence_model.hpp"
#include "pt/objective.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pt;
using pt::testing::values;

namespace {

pt::testing::Matrix rows_of(const Tensor& t) {
  pt::testing::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Tensor random_allocations(std::size_t rows, std::size_t n, std::mt19937_64& rng) {
  return allocation_head(pt::testing::random_tensor({rows, n}, rng, -2, 2, false));
}

}  // namespace

TEST_CASE("arithmetic_return") {
  CHECK(arithmetic_return(102, 100) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(arithmetic_return(100, 100) == 0.0);
  CHECK(arithmetic_return(95, 100) == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK_THROWS_AS(arithmetic_return(1, 0), DataError);
  CHECK_THROWS_AS(arithmetic_return(1, -3), DataError);
}

TEST_CASE("portfolio_returns hand cases") {
  const Tensor w = Tensor::matrix({{0.5, -0.5}});
  const Tensor r = Tensor::matrix({{0.02, 0.01}});

  const Tensor no_turnover = portfolio_returns(w, {r, {0.5, -0.5}}, CostModel{0.0002});
  CHECK(no_turnover.at(0) == doctest::Approx(0.005).epsilon(1e-14));

  const Tensor with_turnover = portfolio_returns(w, {r, {0.3, -0.7}}, CostModel{0.0002});
  CHECK(std::abs(with_turnover.at(0) - 0.00492) < 1e-15);

  std::mt19937_64 rng(1);
  const Tensor ws = random_allocations(6, 3, rng);
  const Tensor rs = pt::testing::random_returns(6, 3, rng);
  const Tensor costless = portfolio_returns(ws, {rs, {}}, CostModel{0.0});
  for (std::size_t t = 0; t < 6; ++t) {
    double dot = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dot += ws.at(t, i) * rs.at(t, i);
    CHECK(costless.at(t) == doctest::Approx(dot).epsilon(1e-14));
  }

  CHECK_THROWS_AS(portfolio_returns(ws, {Tensor::zeros({5, 3}), {}}, CostModel{}),
                  DimensionError);
  CHECK_THROWS_AS(portfolio_returns(ws, {rs, {1.0}}, CostModel{}), DimensionError);
  CHECK_THROWS_AS(portfolio_returns(ws, {rs, {}}, CostModel{-1.0}), ContractError);
}

TEST_CASE("episode start is charged against a zero portfolio") {
  const Tensor w = Tensor::matrix({{1.0, 0.0}, {1.0, 0.0}});
  const Tensor r = Tensor::matrix({{0.0, 0.0}, {0.0, 0.0}});
  const Tensor R = portfolio_returns(w, {r, {}}, CostModel{0.0002});
  CHECK(R.at(0) == doctest::Approx(-0.0002).epsilon(1e-15));
  CHECK(R.at(1) == 0.0);
}

TEST_CASE("sharpe values") {
  CHECK(std::abs(sharpe(Tensor::vector({0.01, 0.03})).item() - 2.0) < 1e-9);

  const double c = 0.004;
  const double degenerate = sharpe(Tensor::vector({c, c, c})).item();
  CHECK(std::isfinite(degenerate));
  CHECK(degenerate == doctest::Approx(c / std::sqrt(1e-12)).epsilon(1e-3));

  std::mt19937_64 rng(2);
  const Tensor r = pt::testing::random_tensor({20}, rng, -0.03, 0.03, false);
  CHECK(sharpe(neg(r)).item() == doctest::Approx(-sharpe(r).item()).epsilon(1e-12));
  CHECK_THROWS_AS(sharpe(Tensor::vector({0.1})), ContractError);
}

TEST_CASE("sharpe is scale invariant and the loss is non-decreasing in cost") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = random_allocations(10, 4, rng);
    const Tensor r = pt::testing::random_returns(10, 4, rng);
    const double base = sharpe_loss(w, {r, {}}, CostModel{0.0}).item();
    for (double lambda : {0.1, 3.0, 25.0}) {
      const double scaled = sharpe_loss(w, {scale(r, lambda), {}}, CostModel{0.0}).item();
      CHECK(std::abs(scaled - base) < 1e-9);
    }
    double previous = base;
    for (double cost : {0.0001, 0.0002, 0.001, 0.01}) {
      const double loss = sharpe_loss(w, {r, {}}, CostModel{cost}).item();
      CHECK(loss >= previous - 1e-15);
      previous = loss;
    }
  }
}

TEST_CASE("sharpe_loss prefers gains over losses") {
  const Tensor w = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  const Tensor up = Tensor::matrix({{0.01, 0.01}, {0.02, 0.02}, {0.01, 0.01}});
  CHECK(sharpe_loss(w, {up, {}}, CostModel{0.0}).item() <
        sharpe_loss(w, {neg(up), {}}, CostModel{0.0}).item());
}

TEST_CASE("sharpe_loss gradient with respect to weights") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor w = pt::testing::random_tensor({8, 3}, rng, -0.6, 0.6);
    const Tensor r = pt::testing::random_returns(8, 3, rng);
    const ReturnsWindow window{r, {0.2, -0.3, 0.5}};
    const auto res =
        pt::testing::check_gradients([&] { return sharpe_loss(w, window, CostModel{}); }, {w});
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("graph loss equals the scalar oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 2 + trial % 15, n = 2 + trial % 5;
    const Tensor w = random_allocations(rows, n, rng);
    const Tensor r = pt::testing::random_returns(rows, n, rng, 0.05);
    std::vector<double> prev;
    if (trial % 2) {
      for (std::size_t i = 0; i < n; ++i) prev.push_back(u(rng));
    }
    const double graph = sharpe_loss(w, {r, prev}, CostModel{0.0002}).item();
    const double oracle = pt::testing::scalar_sharpe_loss(rows_of(w), rows_of(r), prev, 0.0002);
    CHECK(std::abs(graph - oracle) <= 1e-12);
  }
}
