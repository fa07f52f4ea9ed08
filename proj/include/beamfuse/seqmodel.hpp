// SPDX-License-Identifier: Apache-2.0
//
// GRU encoder-decoder with additive attention: a bidirectional encoder and
// a two-layer decoder. Weights are generated from a seed, never trained.
//
// GRU convention:
//   z  = sigmoid(W_z x + U_z h + b_z)
//   r  = sigmoid(W_r x + U_r h + b_r)
//   hc = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * hc
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "beamfuse/tensorkit.hpp"

namespace beamfuse {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kFirstWordId = 3;

struct ModelDims {
  Index vocab_src = 30000;
  Index vocab_tgt = 30000;
  Index embed_dim = 256;
  Index state_dim = 256;

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

struct GruParams {
  MatrixF w_z, w_r, w_h;  // state x input
  MatrixF u_z, u_r, u_h;  // state x state
  VectorF b_z, b_r, b_h;  // state

  static GruParams zeros(Index input_dim, Index state_dim);
  Index input_dim() const { return w_z.cols(); }
  Index state_dim() const { return w_z.rows(); }
};

struct AttentionParams {
  MatrixF w_a;  // attn x state, applied to the layer-1 decoder state
  MatrixF u_a;  // attn x 2*state, applied to annotations
  VectorF v_a;  // attn
};

/// One named tensor of the model, in serialization order.
struct TensorView {
  std::string name;
  float* data;
  Index rows;
  Index cols;
  Index size() const { return rows * cols; }
};

struct ModelParams {
  ModelDims dims;
  std::uint64_t seed = 0;

  MatrixF src_embed;  // vocab_src x embed
  MatrixF tgt_embed;  // vocab_tgt x embed
  GruParams enc_fwd, enc_bwd;
  GruParams dec1;  // input: target embedding
  GruParams dec2;  // input: attention context (2*state)
  AttentionParams att;
  MatrixF out_w;  // vocab_tgt x (state + 2*state + embed)
  VectorF out_b;  // vocab_tgt

  // Set on copies whose matrices were already rounded to binary16 values, so
  // emulated16 products can skip re-rounding the weights.
  bool weights_half_rounded = false;

  /// All-zero parameters with the given shapes.
  static ModelParams zeros(const ModelDims& dims);

  Index output_input_dim() const { return 3 * dims.state_dim + dims.embed_dim; }

  /// Tensors in the fixed order used by generation and the BFM1 format.
  std::vector<TensorView> tensors();
  std::vector<TensorView> tensors() const;

  /// Throws ValueError if any shape disagrees with dims or an entry is non-finite.
  void validate() const;
};

/// Weights i.i.d. uniform in [-0.08, 0.08) from xoshiro256** seeded with
/// `seed`, filled tensor by tensor in serialization order.
ModelParams generate_model(const ModelDims& dims, std::uint64_t seed);

/// Copy of `model` with every matrix rounded to binary16 values.
ModelParams half_rounded_copy(const ModelParams& model);

struct EncoderOutput {
  MatrixF annotations;  // length x 2*state, row t = [forward_t ; backward_t]
  MatrixF keys;         // length x attn, annotations projected by U_a
  Index length() const { return annotations.rows(); }
};

struct DecoderState {
  VectorF h1;
  VectorF h2;
};

/// Batched GRU step over rows: h (batch x state), x (batch x input).
MatrixF gru_step_rows(const MatrixF& h, const MatrixF& x, const GruParams& p,
                      PrecisionMode mode = PrecisionMode::full32, bool prerounded = false);

/// Single GRU cell update.
VectorF gru_cell(const VectorF& h, const VectorF& x, const GruParams& p,
                 PrecisionMode mode = PrecisionMode::full32);

EncoderOutput encode(const ModelParams& model, std::span<const TokenId> tokens,
                     PrecisionMode mode = PrecisionMode::full32);

DecoderState initial_state(const ModelParams& model);

struct StepOutput {
  std::vector<DecoderState> states;
  MatrixF logits;                    // batch x vocab_tgt, bias not applied
  std::vector<VectorF> attention;    // per slot, length = source length
  double output_matmul_seconds = 0;  // time spent in the output projection
};

/// One decoder step for a batch of slots. Row i of the result depends only on
/// slot i's inputs, bitwise.
StepOutput decode_step(const ModelParams& model, std::span<const DecoderState> states,
                       std::span<const TokenId> prev_tokens,
                       std::span<const EncoderOutput* const> enc,
                       PrecisionMode mode = PrecisionMode::full32);

}  // namespace beamfuse
