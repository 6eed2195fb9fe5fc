#pragma once

#include <functional>
#include <span>
#include <vector>

#include "unisoma/tensor.hpp"

namespace unisoma {

/// Backward rule of one recorded op. `grad_in[i]` is null when input i does
/// not need a gradient; otherwise the rule accumulates into it.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<std::vector<double>* const> grad_in)>;

class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::vector<double>> per_node, std::vector<Shape> shapes, const Tape* tape)
      : grads_(std::move(per_node)), shapes_(std::move(shapes)), tape_(tape) {}

  /// Gradient of the loss with respect to `t`; zeros when `t` did not
  /// contribute. Throws if `t` was recorded on a different tape.
  Tensor of(const Tensor& t) const;

 private:
  std::vector<std::vector<double>> grads_;
  std::vector<Shape> shapes_;
  const Tape* tape_ = nullptr;
};

/// Single-use reverse-mode recording of one forward pass.
///
/// Ops record a node when any input lives on a tape. backward() replays the
/// nodes in reverse order once; a second call throws.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a leaf whose gradient is wanted.
  Tensor watch(const Tensor& value);

  /// Attaches `out` to the tape shared by `inputs`. Returns `out` untouched
  /// when no input is tracked.
  static Tensor record(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn);
  static Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn);

  Gradients backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn fn;
    Shape shape;
  };
  int push(Node node);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace unisoma
