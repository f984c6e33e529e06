#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hippo/numcore/autodiff.hpp"
#include "hippo/numcore/rng.hpp"

namespace hippo {

// Ordered collection of named tensors. Insertion order is the canonical
// order for binding, optimization and serialization.
template <typename Real>
class ParamSet {
 public:
  using TensorT = BasicTensor<Real>;

  std::size_t add(std::string name, TensorT value) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  TensorT& operator[](std::size_t i) { return values_.at(i); }
  const TensorT& operator[](std::size_t i) const { return values_.at(i); }
  TensorT& operator[](const std::string& n) { return values_[index(n)]; }
  const TensorT& operator[](const std::string& n) const { return values_[index(n)]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  // Records every tensor as a leaf; the returned handles follow index order.
  std::vector<ad::Var> bind(ad::Tape<Real>& tape, bool requires_grad = true) const {
    std::vector<ad::Var> vars;
    vars.reserve(values_.size());
    for (const auto& v : values_) vars.push_back(tape.leaf(v, requires_grad));
    return vars;
  }

  // Copies every tensor whose name starts with `prefix` from `other`.
  void assign_prefixed(const ParamSet& other, const std::string& prefix) {
    for (std::size_t i = 0; i < other.size(); ++i)
      if (other.name(i).rfind(prefix, 0) == 0) (*this)[other.name(i)] = other[i];
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<TensorT> values_;
  std::map<std::string, std::size_t> index_;
};

// Tape handles of a ParamSet, looked up by name.
template <typename Real>
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(const ParamSet<Real>& params, std::vector<ad::Var> vars) : params_(&params), vars_(std::move(vars)) {}

  ad::Var operator[](const std::string& name) const { return vars_.at(params_->index(name)); }
  const std::vector<ad::Var>& vars() const noexcept { return vars_; }

 private:
  const ParamSet<Real>* params_ = nullptr;
  std::vector<ad::Var> vars_;
};

// Binds every tensor; those for which `trainable(name)` is false become
// constants that receive no gradient.
template <typename Real, typename Pred>
BoundParams<Real> bind_params(ad::Tape<Real>& tape, const ParamSet<Real>& params, Pred trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.leaf(params[i], trainable(params.name(i))));
  return BoundParams<Real>(params, std::move(vars));
}

template <typename Real>
BoundParams<Real> bind_params(ad::Tape<Real>& tape, const ParamSet<Real>& params, bool requires_grad = true) {
  return bind_params(tape, params, [requires_grad](const std::string&) { return requires_grad; });
}

enum class InitScheme { kUniformScaled, kZeros, kOnes };

// Glorot-style U(-s, s) with s = sqrt(6 / (fan_in + fan_out)). For rank > 2
// the leading dimensions multiply into the receptive field.
template <typename Real = double>
BasicTensor<Real> seeded_init(const Shape& shape, InitScheme scheme, Rng& rng) {
  if (shape.empty()) throw ShapeError("seeded_init: empty shape");
  switch (scheme) {
    case InitScheme::kZeros:
      return BasicTensor<Real>::zeros(shape);
    case InitScheme::kOnes:
      return BasicTensor<Real>::ones(shape);
    case InitScheme::kUniformScaled:
      break;
  }
  std::size_t fan_in = shape[0], fan_out = shape[0];
  if (shape.size() >= 2) {
    std::size_t receptive = 1;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= shape[i];
    fan_in = shape[shape.size() - 2] * receptive;
    fan_out = shape[shape.size() - 1] * receptive;
  }
  const double s = std::sqrt(6.0 / double(fan_in + fan_out));
  BasicTensor<Real> out(shape);
  for (auto& v : out.data()) v = Real(rng.uniform(-s, s));
  return out;
}

// Adds `name` drawn from its own stream of `base`, so the draw does not depend
// on the order in which parameters are created.
template <typename Real>
void add_param(ParamSet<Real>& params, const std::string& name, const Shape& shape, InitScheme scheme, const Rng& base) {
  Rng r = base.split(hash_tag(name));
  params.add(name, seeded_init<Real>(shape, scheme, r));
}

}  // namespace hippo
