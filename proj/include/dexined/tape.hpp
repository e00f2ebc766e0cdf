#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

// Ordered record of executed ops for reverse-mode differentiation.
//
// Each recorded entry owns a closure that reads the gradient of the op's
// output and adds the corresponding contributions into the gradients of its
// inputs. backward() replays the closures in exact reverse execution order,
// so a tensor consumed by several ops receives the sum of all contributions
// before its own producer runs.
//
// A Tape is owned by a single thread. Concurrent workers each use their own.
template <class T>
class Tape {
 public:
  struct Options {
    bool record = true;
    bool check_finite = false;
  };

  Tape() = default;
  explicit Tape(Options opts) : opts_(opts) {}

  bool recording() const { return opts_.record; }
  bool checks_finite() const { return opts_.check_finite; }
  void set_check_finite(bool on) { opts_.check_finite = on; }

  std::size_t size() const { return entries_.size(); }
  const std::string& op_name(std::size_t i) const { return entries_[i].op; }

  void push(std::string op, std::function<void()> backward) {
    entries_.push_back({std::move(op), std::move(backward)});
  }

  // Seeds d(root)/d(root) = 1 and propagates to every recorded input.
  void backward(const Tensor<T>& root) {
    if (root.numel() != 1)
      throw ShapeError("backward() needs a scalar root, got " + root.shape().str());
    root.grad()[0] += T(1);
    visit_order_.clear();
    for (std::size_t i = entries_.size(); i-- > 0;) {
      visit_order_.push_back(i);
      entries_[i].backward();
    }
  }

  // Entry indices in the order the last backward() visited them.
  const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

  // Releases the closures and with them every captured activation.
  void clear() {
    entries_.clear();
    visit_order_.clear();
  }

 private:
  struct Entry {
    std::string op;
    std::function<void()> backward;
  };
  Options opts_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> visit_order_;
};

namespace detail {

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const Tensor<T>* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Common tail of every op: finiteness check, then tape registration when
// some input is differentiable.
template <class T, class Backward>
void finish(Tape<T>* tape, const char* op, Tensor<T>& out,
            std::initializer_list<const Tensor<T>*> inputs, Backward&& backward) {
  if (!tape) return;
  if (tape->checks_finite() && !out.all_finite())
    throw NumericError(std::string("non-finite output produced by op '") + op + "'");
  if (!tape->recording() || !any_requires_grad<T>(inputs)) return;
  out.set_requires_grad(true);
  tape->push(op, std::forward<Backward>(backward));
}

}  // namespace detail
}  // namespace dexined
