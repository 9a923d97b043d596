#pragma once

#include <random>
#include <vector>

#include "pt/model/portfolio_transformer.hpp"
#include "pt/objective.hpp"
#include "pt/tensor.hpp"

namespace pt::testing {

// Configuration used by the gradient-fidelity checks.
inline PTConfig tiny_pt_config(std::uint64_t seed = 7) {
  PTConfig c;
  c.n_assets = 3;
  c.window = 8;
  c.d_model = 8;
  c.n_heads = 2;
  c.t2v_k = 3;
  c.n_layers = 1;
  c.seed = seed;
  return c;
}

inline Tensor random_returns(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                             double spread = 0.02) {
  std::uniform_real_distribution<double> u(-spread, spread);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  return Tensor::from({rows, cols}, std::move(v));
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace pt::testing
