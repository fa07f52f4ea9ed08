// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/seqmodel.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "beamfuse/error.hpp"
#include "beamfuse/rng.hpp"

namespace beamfuse {

namespace {

inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

void check_rows(const MatrixF& m, Index rows, Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValueError("model tensor " + name + " is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

void check_gru(const GruParams& g, Index in, Index state, const std::string& name) {
  check_rows(g.w_z, state, in, name + ".w_z");
  check_rows(g.w_r, state, in, name + ".w_r");
  check_rows(g.w_h, state, in, name + ".w_h");
  check_rows(g.u_z, state, state, name + ".u_z");
  check_rows(g.u_r, state, state, name + ".u_r");
  check_rows(g.u_h, state, state, name + ".u_h");
  for (const VectorF* b : {&g.b_z, &g.b_r, &g.b_h}) {
    if (b->size() != state) throw ValueError("model tensor " + name + " bias has wrong length");
  }
}

template <typename Model>
std::vector<TensorView> collect_tensors(Model& m) {
  auto mat = [](const std::string& name, auto& x) {
    return TensorView{name, const_cast<float*>(x.data()), x.rows(), x.cols()};
  };
  std::vector<TensorView> out;
  out.push_back(mat("src_embed", m.src_embed));
  out.push_back(mat("tgt_embed", m.tgt_embed));
  const std::pair<const char*, decltype(&m.enc_fwd)> grus[] = {
      {"enc_fwd", &m.enc_fwd}, {"enc_bwd", &m.enc_bwd}, {"dec1", &m.dec1}, {"dec2", &m.dec2}};
  for (const auto& [prefix, g] : grus) {
    const std::string p = prefix;
    out.push_back(mat(p + ".w_z", g->w_z));
    out.push_back(mat(p + ".w_r", g->w_r));
    out.push_back(mat(p + ".w_h", g->w_h));
    out.push_back(mat(p + ".u_z", g->u_z));
    out.push_back(mat(p + ".u_r", g->u_r));
    out.push_back(mat(p + ".u_h", g->u_h));
    out.push_back(mat(p + ".b_z", g->b_z));
    out.push_back(mat(p + ".b_r", g->b_r));
    out.push_back(mat(p + ".b_h", g->b_h));
  }
  out.push_back(mat("att.w_a", m.att.w_a));
  out.push_back(mat("att.u_a", m.att.u_a));
  out.push_back(mat("att.v_a", m.att.v_a));
  out.push_back(mat("out.w", m.out_w));
  out.push_back(mat("out.b", m.out_b));
  return out;
}

MatrixF gather_rows(const MatrixF& table, std::span<const TokenId> ids) {
  MatrixF out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Index>(i)) = table.row(ids[i]);
  return out;
}

}  // namespace

void ModelDims::validate() const {
  if (vocab_src < 1 || vocab_tgt < 1 || embed_dim < 1 || state_dim < 1) {
    throw ValueError("model dimensions must all be >= 1 (vocab_src=" + std::to_string(vocab_src) +
                     ", vocab_tgt=" + std::to_string(vocab_tgt) +
                     ", embed=" + std::to_string(embed_dim) +
                     ", state=" + std::to_string(state_dim) + ")");
  }
  constexpr Index u32max = std::numeric_limits<std::uint32_t>::max();
  if (vocab_src > u32max || vocab_tgt > u32max || embed_dim > u32max || state_dim > u32max) {
    throw ValueError("model dimensions must fit in 32 bits");
  }
}

GruParams GruParams::zeros(Index input_dim, Index state_dim) {
  GruParams g;
  for (MatrixF* w : {&g.w_z, &g.w_r, &g.w_h}) *w = MatrixF::Zero(state_dim, input_dim);
  for (MatrixF* u : {&g.u_z, &g.u_r, &g.u_h}) *u = MatrixF::Zero(state_dim, state_dim);
  for (VectorF* b : {&g.b_z, &g.b_r, &g.b_h}) *b = VectorF::Zero(state_dim);
  return g;
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  dims.validate();
  const Index s = dims.state_dim, e = dims.embed_dim;
  ModelParams m;
  m.dims = dims;
  m.src_embed = MatrixF::Zero(dims.vocab_src, e);
  m.tgt_embed = MatrixF::Zero(dims.vocab_tgt, e);
  m.enc_fwd = GruParams::zeros(e, s);
  m.enc_bwd = GruParams::zeros(e, s);
  m.dec1 = GruParams::zeros(e, s);
  m.dec2 = GruParams::zeros(2 * s, s);
  m.att.w_a = MatrixF::Zero(s, s);
  m.att.u_a = MatrixF::Zero(s, 2 * s);
  m.att.v_a = VectorF::Zero(s);
  m.out_w = MatrixF::Zero(dims.vocab_tgt, m.output_input_dim());
  m.out_b = VectorF::Zero(dims.vocab_tgt);
  return m;
}

std::vector<TensorView> ModelParams::tensors() { return collect_tensors(*this); }
std::vector<TensorView> ModelParams::tensors() const { return collect_tensors(*this); }

void ModelParams::validate() const {
  dims.validate();
  const Index s = dims.state_dim, e = dims.embed_dim;
  check_rows(src_embed, dims.vocab_src, e, "src_embed");
  check_rows(tgt_embed, dims.vocab_tgt, e, "tgt_embed");
  check_gru(enc_fwd, e, s, "enc_fwd");
  check_gru(enc_bwd, e, s, "enc_bwd");
  check_gru(dec1, e, s, "dec1");
  check_gru(dec2, 2 * s, s, "dec2");
  check_rows(att.w_a, s, s, "att.w_a");
  check_rows(att.u_a, s, 2 * s, "att.u_a");
  if (att.v_a.size() != s) throw ValueError("model tensor att.v_a has wrong length");
  check_rows(out_w, dims.vocab_tgt, output_input_dim(), "out.w");
  if (out_b.size() != dims.vocab_tgt) throw ValueError("model tensor out.b has wrong length");
  for (const TensorView& t : tensors()) {
    for (Index i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t.data[i])) throw ValueError("model tensor " + t.name + " is non-finite");
    }
  }
}

ModelParams generate_model(const ModelDims& dims, std::uint64_t seed) {
  ModelParams m = ModelParams::zeros(dims);
  m.seed = seed;
  Xoshiro256 rng(seed);
  for (TensorView& t : m.tensors()) {
    for (Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-0.08f, 0.08f);
  }
  return m;
}

ModelParams half_rounded_copy(const ModelParams& model) {
  ModelParams m = model;
  for (TensorView& t : m.tensors()) {
    if (t.cols == 1) continue;  // bias-like vectors stay full precision
    for (Index i = 0; i < t.size(); ++i) t.data[i] = round_to_half(t.data[i]);
  }
  m.weights_half_rounded = true;
  return m;
}

MatrixF gru_step_rows(const MatrixF& h, const MatrixF& x, const GruParams& p, PrecisionMode mode,
                      bool prerounded) {
  const Index batch = h.rows(), state = p.state_dim();
  if (x.rows() != batch || h.cols() != state || x.cols() != p.input_dim()) {
    throw ShapeError("gru: state " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                     ", input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                     ", cell expects state " + std::to_string(state) + " and input " +
                     std::to_string(p.input_dim()));
  }
  const MatrixF wz = linear_rows(x, p.w_z, mode, prerounded);
  const MatrixF wr = linear_rows(x, p.w_r, mode, prerounded);
  const MatrixF wh = linear_rows(x, p.w_h, mode, prerounded);
  const MatrixF uz = linear_rows(h, p.u_z, mode, prerounded);
  const MatrixF ur = linear_rows(h, p.u_r, mode, prerounded);

  MatrixF z(batch, state), rh(batch, state);
  for (Index i = 0; i < batch; ++i) {
    for (Index j = 0; j < state; ++j) {
      z(i, j) = sigmoid((wz(i, j) + uz(i, j)) + p.b_z[j]);
      const float r = sigmoid((wr(i, j) + ur(i, j)) + p.b_r[j]);
      rh(i, j) = r * h(i, j);
    }
  }
  const MatrixF uh = linear_rows(rh, p.u_h, mode, prerounded);

  MatrixF out(batch, state);
  for (Index i = 0; i < batch; ++i) {
    for (Index j = 0; j < state; ++j) {
      const float cand = std::tanh((wh(i, j) + uh(i, j)) + p.b_h[j]);
      out(i, j) = (1.0f - z(i, j)) * h(i, j) + z(i, j) * cand;
    }
  }
  return out;
}

VectorF gru_cell(const VectorF& h, const VectorF& x, const GruParams& p, PrecisionMode mode) {
  const MatrixF hrow = h.transpose();
  const MatrixF xrow = x.transpose();
  return gru_step_rows(hrow, xrow, p, mode).row(0).transpose();
}

EncoderOutput encode(const ModelParams& model, std::span<const TokenId> tokens, PrecisionMode mode) {
  if (tokens.empty()) throw ValueError("encode: empty source sentence");
  for (TokenId t : tokens) {
    if (t < 0 || t >= model.dims.vocab_src) {
      throw ValueError("encode: token id " + std::to_string(t) + " outside source vocabulary of " +
                       std::to_string(model.dims.vocab_src));
    }
  }
  const Index len = static_cast<Index>(tokens.size()), s = model.dims.state_dim;
  const bool pre = model.weights_half_rounded;
  const MatrixF emb = gather_rows(model.src_embed, tokens);

  EncoderOutput enc;
  enc.annotations.resize(len, 2 * s);
  MatrixF h = MatrixF::Zero(1, s);
  for (Index t = 0; t < len; ++t) {
    h = gru_step_rows(h, emb.row(t), model.enc_fwd, mode, pre);
    enc.annotations.block(t, 0, 1, s) = h;
  }
  h.setZero();
  for (Index t = len - 1; t >= 0; --t) {
    h = gru_step_rows(h, emb.row(t), model.enc_bwd, mode, pre);
    enc.annotations.block(t, s, 1, s) = h;
  }
  enc.keys = linear_rows(enc.annotations, model.att.u_a, mode, pre);
  return enc;
}

DecoderState initial_state(const ModelParams& model) {
  return {VectorF::Zero(model.dims.state_dim), VectorF::Zero(model.dims.state_dim)};
}

StepOutput decode_step(const ModelParams& model, std::span<const DecoderState> states,
                       std::span<const TokenId> prev_tokens,
                       std::span<const EncoderOutput* const> enc, PrecisionMode mode) {
  if (states.size() != prev_tokens.size() || states.size() != enc.size()) {
    throw ShapeError("decode_step: batch arrays misaligned (states " +
                     std::to_string(states.size()) + ", tokens " +
                     std::to_string(prev_tokens.size()) + ", encodings " +
                     std::to_string(enc.size()) + ")");
  }
  const Index batch = static_cast<Index>(states.size());
  const Index s = model.dims.state_dim, e = model.dims.embed_dim;
  const bool pre = model.weights_half_rounded;
  for (TokenId t : prev_tokens) {
    if (t < 0 || t >= model.dims.vocab_tgt) {
      throw ValueError("decode_step: token id " + std::to_string(t) +
                       " outside target vocabulary of " + std::to_string(model.dims.vocab_tgt));
    }
  }

  MatrixF h1(batch, s), h2(batch, s);
  for (Index i = 0; i < batch; ++i) {
    const DecoderState& st = states[static_cast<std::size_t>(i)];
    if (st.h1.size() != s || st.h2.size() != s || enc[static_cast<std::size_t>(i)] == nullptr) {
      throw ShapeError("decode_step: slot " + std::to_string(i) + " has a malformed state");
    }
    h1.row(i) = st.h1.transpose();
    h2.row(i) = st.h2.transpose();
  }

  const MatrixF emb = gather_rows(model.tgt_embed, prev_tokens);
  const MatrixF h1n = gru_step_rows(h1, emb, model.dec1, mode, pre);

  StepOutput out;
  out.attention.resize(static_cast<std::size_t>(batch));
  const MatrixF query = linear_rows(h1n, model.att.w_a, mode, pre);
  MatrixF context(batch, 2 * s);
  for (Index i = 0; i < batch; ++i) {
    const EncoderOutput& src = *enc[static_cast<std::size_t>(i)];
    const Index len = src.length(), attn = model.att.v_a.size();
    VectorF energy(len);
    for (Index t = 0; t < len; ++t) {
      float acc = 0;
      for (Index a = 0; a < attn; ++a) acc += model.att.v_a[a] * std::tanh(query(i, a) + src.keys(t, a));
      energy[t] = acc;
    }
    float emax = energy[0];
    for (Index t = 1; t < len; ++t) emax = std::max(emax, energy[t]);
    double denom = 0;
    for (Index t = 0; t < len; ++t) denom += std::exp(static_cast<double>(energy[t]) - emax);
    VectorF alpha(len);
    for (Index t = 0; t < len; ++t) {
      alpha[t] = static_cast<float>(std::exp(static_cast<double>(energy[t]) - emax) / denom);
    }
    for (Index j = 0; j < 2 * s; ++j) {
      float acc = 0;
      for (Index t = 0; t < len; ++t) acc += alpha[t] * src.annotations(t, j);
      context(i, j) = acc;
    }
    out.attention[static_cast<std::size_t>(i)] = std::move(alpha);
  }

  const MatrixF h2n = gru_step_rows(h2, context, model.dec2, mode, pre);

  MatrixF features(batch, model.output_input_dim());
  features.leftCols(s) = h2n;
  features.middleCols(s, 2 * s) = context;
  features.rightCols(e) = emb;

  const auto t0 = std::chrono::steady_clock::now();
  out.logits = linear_rows(features, model.out_w, mode, pre);
  out.output_matmul_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.states.resize(static_cast<std::size_t>(batch));
  for (Index i = 0; i < batch; ++i) {
    out.states[static_cast<std::size_t>(i)] = {h1n.row(i).transpose(), h2n.row(i).transpose()};
  }
  return out;
}

}  // namespace beamfuse
