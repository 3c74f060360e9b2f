#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "egolstm/rng.hpp"
#include "egolstm/tensor.hpp"

namespace egolstm {

// Maps the inputs to a scalar loss built from tape-registered ops.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// |a - n| / max(|a|, |n|, 1e-3)
double gradcheck_relative_error(double analytic, double numeric);

struct GradcheckOutcome {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::int64_t checked = 0;  // number of scalar partials compared
};

// Reverse-mode gradients of f against central differences with step h, for
// every element of every f64 input. Inputs are perturbed in place and
// restored.
GradcheckOutcome check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

struct GradcheckProblem {
  std::vector<Tensor> inputs;
  ScalarFn fn;
};

struct GradcheckCase {
  std::string name;
  double tolerance;  // max relative error
  std::function<GradcheckProblem(Rng&)> make;  // random shapes and values per trial
};

const std::vector<GradcheckCase>& gradcheck_cases();

struct GradcheckRow {
  std::string op;
  std::int64_t trials = 0;
  double max_rel_error = 0;
  double tolerance = 0;
  bool pass = false;
};

// op is "all" or a case name; throws std::invalid_argument for unknown names.
std::vector<GradcheckRow> run_gradcheck(std::string_view op, std::uint64_t seed, std::int64_t trials);

}  // namespace egolstm
