#include "egolstm/tape.hpp"

#include <stdexcept>

#include "egolstm/fpenv.hpp"

namespace egolstm {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (consumed_) throw std::logic_error("Tape::record: tape already consumed by backward()");
  records_.push_back(Record{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  FlushDenormalsScope ftz;
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not depend on any tensor that requires grad");
  }
  if (consumed_) throw std::logic_error("backward: tape already consumed");

  // Locate the producing record; anything recorded later cannot reach loss.
  std::ptrdiff_t start = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(records_.size()) - 1; i >= 0; --i) {
    if (records_[static_cast<std::size_t>(i)].output.same_as(loss)) {
      start = i;
      break;
    }
  }
  if (start < 0) throw std::logic_error("backward: loss was not produced on this tape");

  Tensor seed = loss;
  dispatch(seed.dtype(), [&](auto tag) {
    using T = decltype(tag);
    seed.ensure_grad<T>()[0] += T{1};
  });

  for (std::ptrdiff_t i = start; i >= 0; --i) {
    auto& rec = records_[static_cast<std::size_t>(i)];
    if (rec.output.has_grad()) rec.backward();
  }
  consumed_ = true;
}

void Tape::clear() {
  records_.clear();
  consumed_ = false;
}

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (g_active_tape == nullptr) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void record(std::string op, std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn fn) {
  output.set_requires_grad(true);
  g_active_tape->record(std::move(op), std::move(inputs), output, std::move(fn));
}

}  // namespace detail

}  // namespace egolstm
