#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "egolstm/errors.hpp"

namespace egolstm {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

using Shape = std::vector<std::int64_t>;

std::string to_string(DType dtype);
std::string shape_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

// Calls fn(T{}) with T = float or double matching dtype.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::kFloat32) return fn(float{});
  return fn(double{});
}

namespace detail {

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kFloat64;
  Buffer data;
  std::optional<Buffer> grad;
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor with shared-handle semantics. Copying a Tensor
// aliases the same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kFloat64);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat64);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::kFloat64);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = DType::kFloat64);
  template <class T>
  static Tensor from_buffer(Shape shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::int64_t dim() const { return static_cast<std::int64_t>(shape().size()); }
  // Negative axes count from the back.
  std::int64_t size(std::int64_t axis) const;
  std::int64_t numel() const;
  DType dtype() const { return impl().dtype; }

  template <class T>
  std::span<const T> data() const;
  // Handle semantics: mutating through a const handle is allowed, as with
  // a const shared_ptr.
  template <class T>
  std::span<T> mutable_data() const;

  double value(std::int64_t flat_index) const;
  double item() const;
  std::vector<double> to_vector() const;
  bool all_finite() const;

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return impl().grad.has_value(); }
  template <class T>
  std::span<const T> grad() const;
  // Zero-initialised on first use.
  template <class T>
  std::span<T> ensure_grad() const;
  Tensor grad_tensor() const;
  void zero_grad();
  void clear_grad();

  // Overwrites this tensor's values (converting dtype); shapes must match.
  void assign(const Tensor& src) const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
void check_same_dtype(const Tensor& a, const Tensor& b, const char* op);

// ---------------------------------------------------------------------------

template <class T>
Tensor Tensor::from_buffer(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_buffer: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype_of<T>();
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

template <class T>
std::span<const T> Tensor::data() const {
  const auto* buf = std::get_if<std::vector<T>>(&impl().data);
  if (buf == nullptr) throw std::invalid_argument("Tensor::data: dtype mismatch, tensor is " + to_string(dtype()));
  return {buf->data(), buf->size()};
}

template <class T>
std::span<T> Tensor::mutable_data() const {
  auto* buf = std::get_if<std::vector<T>>(&impl().data);
  if (buf == nullptr) throw std::invalid_argument("Tensor::mutable_data: dtype mismatch, tensor is " + to_string(dtype()));
  return {buf->data(), buf->size()};
}

template <class T>
std::span<const T> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient recorded");
  const auto& buf = std::get<std::vector<T>>(*impl().grad);
  return {buf.data(), buf.size()};
}

template <class T>
std::span<T> Tensor::ensure_grad() const {
  auto& im = impl();
  if (!im.grad) im.grad = std::vector<T>(static_cast<std::size_t>(numel()), T{0});
  auto& buf = std::get<std::vector<T>>(*im.grad);
  return {buf.data(), buf.size()};
}

}  // namespace egolstm
