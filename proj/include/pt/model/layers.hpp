#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pt/model/sequence_model.hpp"
#include "pt/tensor.hpp"

namespace pt {

// Dropout that is active only in training mode.
Tensor train_dropout(const Tensor& x, double rate, const ForwardMode& mode);

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero bias.
struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t width);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, 1e-5); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Learnable time encoding: one linear component followed by k sinusoids.
struct Time2VecLayer {
  Tensor omega;  // k + 1
  Tensor phi;    // k + 1

  Time2VecLayer() = default;
  Time2VecLayer(std::size_t k, Rng& rng);

  std::size_t width() const { return omega.size(); }
  // Rows t = 0..count-1 of the encoding, count x (k + 1).
  Tensor encode_positions(std::size_t count) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Encoding of a single position t; element 0 is omega0*t + phi0 and elements
// 1..k are sin(omega_i*t + phi_i).
Tensor time2vec_encode(std::size_t t, const Time2VecLayer& layer);

struct MHALayer {
  std::vector<Tensor> w_query;  // per head, d_model x d_k
  std::vector<Tensor> w_key;
  std::vector<Tensor> w_value;
  Tensor w_out;  // (h * d_k) x d_model

  MHALayer() = default;
  MHALayer(std::size_t d_model, std::size_t n_heads, Rng& rng);

  std::size_t n_heads() const { return w_query.size(); }
  std::size_t key_width() const { return w_query.empty() ? 0 : w_query[0].cols(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Additive mask that lets position i see positions j <= i only.
Tensor causal_mask(std::size_t size);

inline constexpr double kMaskBlocked = -1e9;

// softmax(Q K^T / scale + mask) V.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                 double scale);

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MHALayer& layer, const Tensor* mask, AttentionScale scale_mode);

// Gated residual network: LayerNorm(z + GLU(W1 ELU(W2 z + b2) + b1)), where
// GLU(g) = (Wg g + bg) * sigmoid(Ws g + bs).
struct GRNLayer {
  Dense inner;   // W2, b2
  Dense outer;   // W1, b1
  Dense value;   // Wg, bg
  Dense gate;    // Ws, bs
  LayerNormParams norm;

  GRNLayer() = default;
  GRNLayer(std::size_t d_model, Rng& rng);

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor grn(const Tensor& z, const GRNLayer& layer, double drop_rate = 0.0,
           const ForwardMode& mode = {});

}  // namespace pt
