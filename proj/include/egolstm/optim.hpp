#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egolstm/rng.hpp"
#include "egolstm/tensor.hpp"

namespace egolstm {

// i.i.d. U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_init(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng,
                   DType dtype = DType::kFloat64);

double xavier_bound(std::int64_t fan_in, std::int64_t fan_out);

struct RmsPropOptions {
  double lr = 1e-5;
  double rho = 0.99;
  double eps = 1e-8;
};

// v <- rho*v + (1-rho)*g^2 ;  p <- p - lr*g/(sqrt(v)+eps), elementwise, in place.
void rmsprop_step(Tensor& param, std::span<const double> grad, Tensor& v, const RmsPropOptions& options);
// Uses param's accumulated grad (zero when absent).
void rmsprop_step(Tensor& param, Tensor& v, const RmsPropOptions& options);

// RMSProp over a fixed, named parameter set.
class RmsProp {
 public:
  RmsProp(std::vector<NamedTensor> params, RmsPropOptions options);

  // One update over every parameter; returns the names touched, in order.
  std::vector<std::string> step();
  void zero_grad();

  const RmsPropOptions& options() const { return options_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& state() const { return state_; }
  // Replaces the square-average buffers (e.g. from a checkpoint).
  void load_state(const std::vector<NamedTensor>& state);

 private:
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> state_;
  RmsPropOptions options_;
};

}  // namespace egolstm
