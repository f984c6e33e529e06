#pragma once

#include <string>
#include <vector>

#include "hippo/numcore/ops.hpp"
#include "hippo/numcore/params.hpp"

namespace hippo {

struct AnnotationEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t d_model = 64;
};

// Parameters live under the "ann." prefix.
template <typename Real>
void init_annotation_encoder(ParamSet<Real>& p, const AnnotationEncoderConfig& c, const Rng& rng) {
  if (c.vocab_size == 0 || c.hidden == 0 || c.d_model == 0) throw ParameterError("annotation encoder: sizes must be positive");
  add_param(p, "ann.w1", {c.vocab_size, c.hidden}, InitScheme::kUniformScaled, rng);
  add_param(p, "ann.b1", {c.hidden}, InitScheme::kZeros, rng);
  add_param(p, "ann.w2", {c.hidden, c.d_model}, InitScheme::kUniformScaled, rng);
  add_param(p, "ann.b2", {c.d_model}, InitScheme::kZeros, rng);
}

// Two-layer perceptron with GELU: [N x K] binary keywords -> [N x d_model].
template <typename Real>
ad::Var encode_annotations(ad::Tape<Real>& t, const BoundParams<Real>& p, ad::Var keywords) {
  const auto& vk = t.value(keywords);
  const std::size_t k = t.value(p["ann.w1"]).dim(0);
  if (vk.rank() != 2 || vk.dim(1) != k)
    throw ShapeError("encode_annotations: expected [N x " + std::to_string(k) + "] keywords, got " +
                     shape_string(vk.shape()));
  for (Real v : vk.data())
    if (v != Real(0) && v != Real(1)) throw ValidationError("encode_annotations: keyword vectors must be binary");
  const ad::Var hidden = ad::gelu(t, ad::linear(t, keywords, p["ann.w1"], p["ann.b1"]));
  return ad::linear(t, hidden, p["ann.w2"], p["ann.b2"]);
}

template <typename Real>
BasicTensor<Real> keyword_matrix(const std::vector<std::vector<std::uint8_t>>& rows, std::size_t width) {
  if (rows.empty()) throw ValidationError("keyword matrix: no rows");
  BasicTensor<Real> out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw ShapeError("keyword vector width differs from the vocabulary");
    for (std::size_t j = 0; j < width; ++j) out(i, j) = rows[i][j] ? Real(1) : Real(0);
  }
  return out;
}

}  // namespace hippo
