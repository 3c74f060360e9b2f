#pragma once

#include <functional>
#include <string>
#include <vector>

#include "egolstm/tensor.hpp"

namespace egolstm {

// Ordered record of differentiable operations executed while the tape is
// active on the current thread. Records are appended in execution order, so
// inputs always precede the operations that consume them; backward() walks
// the records once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Record {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates into every reachable tensor that
  // requires grad. Gradients accumulate into existing grad buffers.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear();

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Backward sweep over the active tape.
void backward(const Tensor& loss);

namespace detail {

// True when an op with these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(const std::vector<Tensor>& inputs);

// Records `output` as produced by `op`; marks it as requiring grad.
void record(std::string op, std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn fn);

}  // namespace detail

}  // namespace egolstm
