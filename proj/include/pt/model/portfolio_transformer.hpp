#pragma once

#include <cstdint>
#include <vector>

#include "pt/model/layers.hpp"
#include "pt/model/sequence_model.hpp"

namespace pt {

struct PTConfig {
  std::size_t n_assets = 2;
  std::size_t window = 2;  // positions per encoder block and per decoder block
  std::size_t d_model = 8;
  std::size_t n_heads = 1;
  std::size_t t2v_k = 1;  // periodic Time2Vec components
  std::size_t n_layers = 4;
  AttentionScale scale = AttentionScale::d_model;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  // Throws ContractError describing the first violated bound.
  void validate() const;
  ModelSpec to_spec() const;
  static PTConfig from_spec(const ModelSpec& spec);
};

struct EncoderLayer {
  MHALayer self_attention;
  LayerNormParams attention_norm;
  GRNLayer gating;
};

struct DecoderLayer {
  MHALayer self_attention;  // causal
  LayerNormParams self_norm;
  MHALayer cross_attention;  // queries from decoder, keys/values from encoder
  LayerNormParams cross_norm;
  GRNLayer gating;
};

// Encoder-decoder attention allocator. Both blocks share one input layer:
// each window row is the N asset returns concatenated with the Time2Vec
// encoding of its 0-based position, projected to d_model.
class PortfolioTransformer final : public SequenceModel {
 public:
  explicit PortfolioTransformer(const PTConfig& config);

  const PTConfig& config() const { return config_; }
  const ModelSpec& spec() const override { return spec_; }

  // window x d_model embedding of a window x n_assets block of returns.
  Tensor embed_window(const Tensor& x) const;
  Tensor encode(const Tensor& x_enc, const ForwardMode& mode = {}) const;
  // Raw output-head scores s, one row per decoder position.
  Tensor scores(const Tensor& x_enc, const Tensor& x_dec, const ForwardMode& mode = {}) const;
  Tensor forward(const Tensor& x_enc, const Tensor& x_dec,
                 const ForwardMode& mode = {}) const override;

  std::vector<NamedTensor> parameters() const override;
  std::unique_ptr<SequenceModel> clone() const override;

  const Time2VecLayer& time2vec() const { return time2vec_; }
  const Dense& input_projection() const { return input_; }
  const Dense& output_head() const { return head_; }
  const std::vector<EncoderLayer>& encoder() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder() const { return decoder_; }

 private:
  void check_window(const Tensor& x, const char* which) const;

  PTConfig config_;
  ModelSpec spec_;
  Dense input_;
  Time2VecLayer time2vec_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Dense head_;
};

}  // namespace pt
