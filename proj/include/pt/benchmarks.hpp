#pragma once

// Baseline allocators compared against the Portfolio Transformer. The neural
// baselines share its allocation head, loss, and training pipeline.

#include <span>
#include <vector>

#include "pt/model/layers.hpp"
#include "pt/model/sequence_model.hpp"

namespace pt {

// Recurrent baseline. Gate order in the packed matrices: input, forget,
// candidate, output.
class LSTMModel final : public SequenceModel {
 public:
  // spec.d_model is the hidden width.
  explicit LSTMModel(const ModelSpec& spec);

  const ModelSpec& spec() const override { return spec_; }

  // Weights for every row of an arbitrary-length rows x n_assets block.
  Tensor lstm_forward(const Tensor& x, const ForwardMode& mode = {}) const;
  // Runs over the encoder then decoder window and returns the decoder rows.
  Tensor forward(const Tensor& x_enc, const Tensor& x_dec,
                 const ForwardMode& mode = {}) const override;

  std::vector<NamedTensor> parameters() const override;
  std::unique_ptr<SequenceModel> clone() const override;

  Tensor w_input;   // n_assets x 4H
  Tensor w_hidden;  // H x 4H
  Tensor bias;      // 4H
  Dense head;       // H -> n_assets

 private:
  ModelSpec spec_;
};

// Feed-forward baseline over a flattened window of returns.
class MLPModel final : public SequenceModel {
 public:
  // spec.d_model is the hidden width.
  explicit MLPModel(const ModelSpec& spec);

  const ModelSpec& spec() const override { return spec_; }

  // One weight vector [n_assets] from a window x n_assets block.
  Tensor mlp_forward(const Tensor& x, const ForwardMode& mode = {}) const;
  // Decoder row j is scored from the `window` rows ending at it, drawn from
  // the concatenated encoder and decoder blocks.
  Tensor forward(const Tensor& x_enc, const Tensor& x_dec,
                 const ForwardMode& mode = {}) const override;

  std::vector<NamedTensor> parameters() const override;
  std::unique_ptr<SequenceModel> clone() const override;

  Dense hidden;
  Dense output;

 private:
  // rows x (window * n_assets) inputs to rows x n_assets weights.
  Tensor score_rows(const Tensor& flat, const ForwardMode& mode) const;
  ModelSpec spec_;
};

struct MVConfig {
  std::size_t lookback = 50;
  double ridge = 1e-6;
};

// Tangency direction of the trailing `lookback` rows of `history`
// (row-major, n_assets columns), normalised to unit gross exposure. Falls
// back to equal weights when the direction is exactly zero.
std::vector<double> mv_weights(std::span<const double> history, std::size_t n_assets,
                               const MVConfig& cfg = {});

// Sigma^{-1} mu normalised to unit gross exposure; `cov` is symmetric n x n.
// Equal weights when mu is exactly zero.
std::vector<double> tangency_weights(std::span<const double> mu, std::span<const double> cov);

std::vector<double> equal_weights(std::size_t n_assets);

}  // namespace pt
