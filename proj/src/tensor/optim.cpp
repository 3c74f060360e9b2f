#include "egolstm/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "egolstm/fpenv.hpp"

namespace egolstm {

double xavier_bound(std::int64_t fan_in, std::int64_t fan_out) {
  if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("xavier_init: fans must be positive");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor xavier_init(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng, DType dtype) {
  const double bound = xavier_bound(fan_in, fan_out);
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_values(shape, values, dtype);
}

namespace {

template <class T, class GradAt>
void rmsprop_kernel(std::span<T> p, std::span<T> v, GradAt grad_at, const RmsPropOptions& o) {
  const T rho = static_cast<T>(o.rho);
  const T one_minus = static_cast<T>(1.0 - o.rho);
  const T lr = static_cast<T>(o.lr);
  const T eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T g = grad_at(i);
    v[i] = rho * v[i] + one_minus * g * g;
    p[i] -= lr * g / (std::sqrt(v[i]) + eps);
  }
}

void check_options(const RmsPropOptions& o) {
  if (!(o.rho > 0.0 && o.rho < 1.0)) throw std::invalid_argument("rmsprop: rho must lie in (0, 1)");
  if (!(o.lr >= 0.0)) throw std::invalid_argument("rmsprop: lr must be non-negative");
}

}  // namespace

void rmsprop_step(Tensor& param, std::span<const double> grad, Tensor& v, const RmsPropOptions& options) {
  check_options(options);
  check_same_shape(param, v, "rmsprop_step");
  if (static_cast<std::int64_t>(grad.size()) != param.numel()) throw ShapeError("rmsprop_step: grad size mismatch");
  dispatch(param.dtype(), [&](auto tag) {
    using T = decltype(tag);
    rmsprop_kernel<T>(
        param.mutable_data<T>(), v.mutable_data<T>(), [&](std::size_t i) { return static_cast<T>(grad[i]); },
        options);
  });
}

void rmsprop_step(Tensor& param, Tensor& v, const RmsPropOptions& options) {
  check_options(options);
  check_same_shape(param, v, "rmsprop_step");
  dispatch(param.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if (param.has_grad()) {
      auto g = param.grad<T>();
      rmsprop_kernel<T>(param.mutable_data<T>(), v.mutable_data<T>(), [&](std::size_t i) { return g[i]; }, options);
    } else {
      rmsprop_kernel<T>(param.mutable_data<T>(), v.mutable_data<T>(), [](std::size_t) { return T{0}; }, options);
    }
  });
}

RmsProp::RmsProp(std::vector<NamedTensor> params, RmsPropOptions options)
    : params_(std::move(params)), options_(options) {
  check_options(options_);
  state_.reserve(params_.size());
  for (const auto& p : params_) state_.push_back({p.name, Tensor::zeros(p.tensor.shape(), p.tensor.dtype())});
}

std::vector<std::string> RmsProp::step() {
  FlushDenormalsScope ftz;
  std::vector<std::string> touched;
  touched.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    rmsprop_step(params_[i].tensor, state_[i].tensor, options_);
    touched.push_back(params_[i].name);
  }
  return touched;
}

void RmsProp::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void RmsProp::load_state(const std::vector<NamedTensor>& state) {
  if (state.size() != params_.size()) throw std::invalid_argument("RmsProp::load_state: parameter count mismatch");
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i].name != params_[i].name) {
      throw std::invalid_argument("RmsProp::load_state: expected state for " + params_[i].name + ", got " +
                                  state[i].name);
    }
    check_same_shape(params_[i].tensor, state[i].tensor, "RmsProp::load_state");
    state_[i].tensor = state[i].tensor.clone();
  }
}

}  // namespace egolstm
