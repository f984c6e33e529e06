#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hippo/dataio/records.hpp"
#include "hippo/numcore/ops.hpp"
#include "hippo/numcore/params.hpp"

namespace hippo {

// Token ids: the 20 amino acids in kAminoAcids order, then X, then padding.
inline constexpr std::size_t kUnknownToken = 20;
inline constexpr std::size_t kPadToken = 21;
inline constexpr std::size_t kTokenCount = 22;

inline std::vector<std::size_t> tokenize(std::string_view sequence) {
  std::vector<std::size_t> out;
  out.reserve(sequence.size());
  for (char c : sequence) {
    if (c == kUnknownResidue) {
      out.push_back(kUnknownToken);
      continue;
    }
    const auto at = kAminoAcids.find(c);
    if (at == std::string_view::npos) throw ValidationError(std::string("unknown residue '") + c + "'");
    out.push_back(at);
  }
  return out;
}

struct SequenceEncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t conv_narrow = 3;
  std::size_t conv_wide = 15;
  std::size_t n_heads = 4;
  std::size_t ff_width = 128;
  std::size_t max_len = 1024;

  void validate() const {
    if (d_model == 0 || n_blocks == 0 || n_heads == 0 || ff_width == 0 || max_len == 0)
      throw ParameterError("encoder: sizes must be positive");
    if (d_model % n_heads != 0) throw ParameterError("encoder: d_model must be divisible by n_heads");
    if (conv_narrow % 2 == 0 || conv_wide % 2 == 0) throw ParameterError("encoder: conv widths must be odd");
  }
};

namespace detail {

inline std::string block_key(std::size_t b, const char* leaf) { return "seq.b" + std::to_string(b) + "." + leaf; }

}  // namespace detail

// Parameters live under the "seq." prefix.
template <typename Real>
void init_sequence_encoder(ParamSet<Real>& p, const SequenceEncoderConfig& c, const Rng& rng) {
  c.validate();
  const std::size_t d = c.d_model;
  using S = InitScheme;
  add_param(p, "seq.embed", {kTokenCount, d}, S::kUniformScaled, rng);
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    auto key = [b](const char* leaf) { return detail::block_key(b, leaf); };
    add_param(p, key("conv_narrow.w"), {c.conv_narrow, d, d}, S::kUniformScaled, rng);
    add_param(p, key("conv_narrow.b"), {d}, S::kZeros, rng);
    add_param(p, key("conv_wide.w"), {c.conv_wide, d, d}, S::kUniformScaled, rng);
    add_param(p, key("conv_wide.b"), {d}, S::kZeros, rng);
    add_param(p, key("ln1.g"), {d}, S::kOnes, rng);
    add_param(p, key("ln1.b"), {d}, S::kZeros, rng);
    // No query/key/value biases: a key bias shifts every score of a row
    // equally and so never receives gradient.
    add_param(p, key("attn.wq"), {d, d}, S::kUniformScaled, rng);
    add_param(p, key("attn.wk"), {d, d}, S::kUniformScaled, rng);
    add_param(p, key("attn.wv"), {d, d}, S::kUniformScaled, rng);
    add_param(p, key("attn.wo"), {d, d}, S::kUniformScaled, rng);
    add_param(p, key("attn.bo"), {d}, S::kZeros, rng);
    add_param(p, key("ln2.g"), {d}, S::kOnes, rng);
    add_param(p, key("ln2.b"), {d}, S::kZeros, rng);
    add_param(p, key("ff.w1"), {d, c.ff_width}, S::kUniformScaled, rng);
    add_param(p, key("ff.b1"), {c.ff_width}, S::kZeros, rng);
    add_param(p, key("ff.w2"), {c.ff_width, d}, S::kUniformScaled, rng);
    add_param(p, key("ff.b2"), {d}, S::kZeros, rng);
    add_param(p, key("ln3.g"), {d}, S::kOnes, rng);
    add_param(p, key("ln3.b"), {d}, S::kZeros, rng);
  }
}

template <typename Real>
struct SequenceEncoding {
  ad::Var states;                // [L x d_model]
  ad::Var pooled;                // [d_model]
  BasicTensor<Real> attention;   // [n_blocks x n_heads x L x L]
};

// Runs the encoder over one (possibly padded) sequence. Positions with
// mask 0 are excluded from convolution inputs, attention keys and pooling,
// so padding never changes the pooled output.
template <typename Real>
SequenceEncoding<Real> encode_sequence(ad::Tape<Real>& t, const SequenceEncoderConfig& c, const BoundParams<Real>& p,
                                       const std::vector<std::size_t>& tokens, std::vector<std::uint8_t> mask = {}) {
  c.validate();
  const std::size_t len = tokens.size(), d = c.d_model, heads = c.n_heads, dh = d / heads;
  if (len == 0) throw ValidationError("encode_sequence: empty sequence");
  if (len > c.max_len)
    throw ValidationError("encode_sequence: length " + std::to_string(len) + " exceeds max_len " +
                          std::to_string(c.max_len) + " (sequences are never truncated)");
  if (mask.empty()) mask.assign(len, 1);
  if (mask.size() != len) throw ShapeError("encode_sequence: mask length differs from token count");
  if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; }))
    throw ValidationError("encode_sequence: every position is masked");
  for (auto tok : tokens)
    if (tok >= kTokenCount) throw ValidationError("encode_sequence: token id out of vocabulary");

  BasicTensor<Real> keep({len, d});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < d; ++j) keep(i, j) = mask[i] ? Real(1) : Real(0);
  const ad::Var keep_v = t.constant(std::move(keep));
  const Real inv_sqrt = Real(1) / std::sqrt(Real(dh));

  SequenceEncoding<Real> out;
  out.attention = BasicTensor<Real>({c.n_blocks, heads, len, len});
  ad::Var h = ad::gather_rows(t, p["seq.embed"], tokens);
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    auto key = [b](const char* leaf) { return detail::block_key(b, leaf); };
    const ad::Var x = ad::mul(t, h, keep_v);
    const ad::Var narrow = ad::gelu(t, ad::conv1d_same(t, x, p[key("conv_narrow.w")], p[key("conv_narrow.b")]));
    const ad::Var wide = ad::gelu(t, ad::conv1d_same(t, x, p[key("conv_wide.w")], p[key("conv_wide.b")]));
    h = ad::layer_norm_rows(t, ad::add(t, ad::add(t, h, narrow), wide), p[key("ln1.g")], p[key("ln1.b")]);

    const ad::Var q = ad::matmul(t, h, p[key("attn.wq")]);
    const ad::Var k = ad::matmul(t, h, p[key("attn.wk")]);
    const ad::Var v = ad::matmul(t, h, p[key("attn.wv")]);
    std::vector<ad::Var> head_out;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const ad::Var qh = ad::slice_cols(t, q, hd * dh, dh);
      const ad::Var kh = ad::slice_cols(t, k, hd * dh, dh);
      const ad::Var vh = ad::slice_cols(t, v, hd * dh, dh);
      const ad::Var scores = ad::scale(t, ad::matmul(t, qh, ad::transpose(t, kh)), inv_sqrt);
      const ad::Var attn = ad::softmax_rows(t, scores, mask);
      const auto& va = t.value(attn);
      std::copy(va.data().begin(), va.data().end(), &out.attention[((b * heads) + hd) * len * len]);
      head_out.push_back(ad::matmul(t, attn, vh));
    }
    const ad::Var mixed = ad::linear(t, ad::concat_cols(t, head_out), p[key("attn.wo")], p[key("attn.bo")]);
    h = ad::layer_norm_rows(t, ad::add(t, h, mixed), p[key("ln2.g")], p[key("ln2.b")]);

    const ad::Var ff = ad::linear(t, ad::gelu(t, ad::linear(t, h, p[key("ff.w1")], p[key("ff.b1")])), p[key("ff.w2")],
                                  p[key("ff.b2")]);
    h = ad::layer_norm_rows(t, ad::add(t, h, ff), p[key("ln3.g")], p[key("ln3.b")]);
  }
  out.states = h;
  out.pooled = ad::masked_mean_rows(t, h, mask);
  return out;
}

template <typename Real>
struct SequenceOutputs {
  BasicTensor<Real> states;
  BasicTensor<Real> pooled;
  BasicTensor<Real> attention;
};

// Inference without gradients.
template <typename Real>
SequenceOutputs<Real> encode_sequence(const SequenceEncoderConfig& c, const ParamSet<Real>& params,
                                      const std::vector<std::size_t>& tokens, std::vector<std::uint8_t> mask = {}) {
  ad::Tape<Real> t;
  const auto bound = bind_params(t, params, false);
  auto enc = encode_sequence(t, c, bound, tokens, std::move(mask));
  return {t.value(enc.states), t.value(enc.pooled), std::move(enc.attention)};
}

}  // namespace hippo
