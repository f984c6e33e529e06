#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hippo/numcore/params.hpp"

namespace hippo {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  std::vector<std::pair<std::string, double>> per_parameter_errors;
  bool passed = false;
  std::string diagnostic;  // set when the check could not be carried out
};

// Scalar-valued function of bound parameters, recorded on the given tape.
using ScalarFn = std::function<ad::Var(ad::Tape<double>&, const std::vector<ad::Var>&)>;

inline double gradcheck_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Compares reverse-mode gradients of `f` at `point` with central differences
// (f(x + h) - f(x - h)) / 2h, one scalar at a time. Non-finite values or
// exceptions during evaluation make the check fail with a diagnostic.
inline GradCheckReport grad_check(std::string op_name, const ScalarFn& f, const ParamSet<double>& point,
                                  double h = 1e-5, double tol = 1e-4) {
  GradCheckReport report;
  report.op_name = std::move(op_name);
  if (!(h > 0.0)) throw ParameterError("grad_check: step h must be positive");

  std::vector<Tensor> analytic;
  try {
    ad::Tape<double> tape;
    const auto vars = point.bind(tape);
    const ad::Var out = f(tape, vars);
    if (tape.value(out).size() != 1) throw ShapeError("grad_check: function must return a scalar");
    tape.backward(out);
    for (ad::Var v : vars) analytic.push_back(tape.grad(v));
  } catch (const std::exception& e) {
    report.diagnostic = std::string("analytic pass failed: ") + e.what();
    return report;
  }

  auto evaluate = [&](const ParamSet<double>& p) {
    ad::Tape<double> tape;
    const auto vars = p.bind(tape, false);
    const double v = tape.value(f(tape, vars)).item();
    if (!std::isfinite(v)) throw NumericError("non-finite function value");
    return v;
  };

  ParamSet<double> probe = point;
  for (std::size_t pi = 0; pi < point.size(); ++pi) {
    double worst = 0.0;
    for (std::size_t k = 0; k < point[pi].size(); ++k) {
      const double orig = point[pi][k];
      double plus = 0.0, minus = 0.0;
      try {
        probe[pi][k] = orig + h;
        plus = evaluate(probe);
        probe[pi][k] = orig - h;
        minus = evaluate(probe);
      } catch (const std::exception& e) {
        report.diagnostic = "probe of " + point.name(pi) + "[" + std::to_string(k) + "] failed: " + e.what();
        report.passed = false;
        return report;
      }
      probe[pi][k] = orig;
      const double numeric = (plus - minus) / (2.0 * h);
      worst = std::max(worst, gradcheck_rel_err(analytic[pi][k], numeric));
    }
    report.per_parameter_errors.emplace_back(point.name(pi), worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  report.passed = report.max_rel_err <= tol;
  return report;
}

}  // namespace hippo
