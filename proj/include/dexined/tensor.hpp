#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dexined/error.hpp"

namespace dexined {

// Extents of a rank-4 NCHW array.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t item() const { return c * h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << 'x' << c << 'x' << h << 'x' << w << ']';
    return os.str();
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

// Dense NCHW array with optional gradient storage.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape route gradients back to the tensors an op consumed. Use
// clone() for an independent deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Impl>()) {
    impl_->shape = shape;
    impl_->data.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    if (values.size() != shape.numel())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape.str());
    impl_->shape = shape;
    impl_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  // Per-channel vector stored as [1 x C x 1 x 1].
  static Tensor vector(std::size_t c, T fill = T(0)) { return Tensor(Shape{1, c, 1, 1}, fill); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const Shape& s = impl_->shape;
    return impl_->data[((n * s.c + c) * s.h + h) * s.w + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = impl_->shape;
    return impl_->data[((n * s.c + c) * s.h + h) * s.w + w];
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  // Gradient buffer, allocated (zeroed) on first access. Gradient storage is
  // reachable through const handles so recorded closures can accumulate.
  std::span<T> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }

  void zero_grad() const {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }
  void drop_grad() { std::vector<T>().swap(impl_->grad); }

  // Deep copy of the values; the copy carries no gradient.
  Tensor clone() const {
    Tensor out(shape());
    std::copy(impl_->data.begin(), impl_->data.end(), out.impl_->data.begin());
    return out;
  }

  // Same values converted to another scalar type.
  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape());
    std::transform(impl_->data.begin(), impl_->data.end(), out.ptr(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  // Single batch item as a new tensor of batch extent 1.
  Tensor item_copy(std::size_t n) const {
    Shape s = shape();
    s.n = 1;
    Tensor out(s);
    const std::size_t len = s.numel();
    std::copy_n(impl_->data.begin() + n * len, len, out.impl_->data.begin());
    return out;
  }

  bool all_finite() const {
    return std::all_of(impl_->data.begin(), impl_->data.end(),
                       [](T v) { return std::isfinite(v); });
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Stack equally shaped batch-1 tensors along the batch axis.
template <class T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: empty list");
  Shape s = items.front().shape();
  for (std::size_t i = 0; i < items.size(); ++i) {
    Shape si = items[i].shape();
    if (si.n != 1 || si.c != s.c || si.h != s.h || si.w != s.w)
      throw ShapeError("stack_batch: operand " + std::to_string(i) + " has shape " + si.str() +
                       ", expected " + Shape{1, s.c, s.h, s.w}.str());
  }
  const std::size_t len = s.item();
  s.n = items.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy_n(items[i].ptr(), len, out.ptr() + i * len);
  return out;
}

}  // namespace dexined
