#include "egolstm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace egolstm {

std::string to_string(DType dtype) {
  return dtype == DType::kFloat32 ? "f32" : "f64";
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("shape extents must be positive: " + shape_string(shape));
    n *= e;
  }
  return n;
}

namespace {

detail::Buffer make_buffer(DType dtype, std::size_t n, double fill) {
  if (dtype == DType::kFloat32) return std::vector<float>(n, static_cast<float>(fill));
  return std::vector<double>(n, fill);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  auto impl = std::make_shared<detail::TensorImpl>();
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = make_buffer(dtype, n, value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_values: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  if (dtype == DType::kFloat32) {
    return from_buffer(std::move(shape), std::vector<float>(values.begin(), values.end()));
  }
  return from_buffer(std::move(shape), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined Tensor");
  return *impl_;
}

std::int64_t Tensor::size(std::int64_t axis) const {
  const auto d = dim();
  if (axis < 0) axis += d;
  if (axis < 0 || axis >= d) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const {
  return std::visit([](const auto& v) { return static_cast<std::int64_t>(v.size()); }, impl().data);
}

double Tensor::value(std::int64_t flat_index) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(static_cast<std::size_t>(flat_index))); },
                    impl().data);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return value(0);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, impl().data);
}

bool Tensor::all_finite() const {
  return std::visit(
      [](const auto& v) { return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); }); },
      impl().data);
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl().requires_grad = flag;
  return *this;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad_tensor: no gradient recorded");
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = shape();
  out->dtype = dtype();
  out->data = *impl().grad;
  return Tensor(std::move(out));
}

void Tensor::zero_grad() {
  auto& im = impl();
  if (!im.grad) return;
  std::visit([](auto& v) { std::fill(v.begin(), v.end(), 0); }, *im.grad);
}

void Tensor::clear_grad() { impl().grad.reset(); }

void Tensor::assign(const Tensor& src) const {
  if (src.shape() != shape()) {
    throw ShapeError("assign: shape mismatch " + shape_string(shape()) + " vs " + shape_string(src.shape()));
  }
  std::visit(
      [](auto& dst, const auto& from) {
        using T = typename std::decay_t<decltype(dst)>::value_type;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(from[i]);
      },
      impl().data, src.impl().data);
}

Tensor Tensor::detach() const {
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = shape();
  out->dtype = dtype();
  out->data = impl().data;
  return Tensor(std::move(out));
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  out.impl().requires_grad = requires_grad();
  if (has_grad()) out.impl().grad = impl().grad;
  return out;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  return std::visit(
      [&](const auto& v) {
        if (target == DType::kFloat32) return from_buffer(shape(), std::vector<float>(v.begin(), v.end()));
        return from_buffer(shape(), std::vector<double>(v.begin(), v.end()));
      },
      impl().data);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  check_same_dtype(a, b, op);
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw std::invalid_argument(std::string(op) + ": dtype mismatch " + to_string(a.dtype()) + " vs " +
                                to_string(b.dtype()));
  }
}

}  // namespace egolstm
