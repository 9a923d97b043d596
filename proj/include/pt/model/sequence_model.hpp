#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pt/tensor.hpp"

namespace pt {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ForwardMode {
  bool training = false;
  // Required when training with a nonzero drop rate.
  Rng* rng = nullptr;
};

enum class AttentionScale { d_model, d_k };

// Everything needed to rebuild a model of any kind with fresh parameters.
// Fields a kind does not use are ignored by it.
struct ModelSpec {
  std::string kind;  // "pt", "lstm", "mlp"
  std::size_t n_assets = 0;
  std::size_t window = 0;
  std::size_t d_model = 8;  // hidden width for lstm/mlp
  std::size_t n_heads = 1;
  std::size_t t2v_k = 1;
  std::size_t n_layers = 4;
  double dropout = 0.0;
  AttentionScale scale = AttentionScale::d_model;
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

// A trainable allocation model. forward() maps an encoder window and a
// decoder window of returns (each window x n_assets, encoder strictly earlier
// in time) to one weight row per decoder position. Row j may depend only on
// the encoder window and decoder rows 0..j, and every row has unit gross
// exposure.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual const ModelSpec& spec() const = 0;
  virtual Tensor forward(const Tensor& x_enc, const Tensor& x_dec,
                         const ForwardMode& mode = {}) const = 0;
  // Handles share storage with the model.
  virtual std::vector<NamedTensor> parameters() const = 0;
  virtual std::unique_ptr<SequenceModel> clone() const = 0;
};

// Builds a freshly initialised model from its spec (seeded by spec.seed).
std::unique_ptr<SequenceModel> make_model(const ModelSpec& spec);

// The shared allocation head: sign(s) * softmax(s) across each row, so that
// every row has sum |w| = 1. The sign factor carries no gradient.
Tensor allocation_head(const Tensor& scores);

// Deep-copies parameter values from `src` into `dst` (same architecture).
void copy_parameters(const SequenceModel& src, SequenceModel& dst);

}  // namespace pt
