#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "titlegen/tensor/rng.hpp"

namespace titlegen::tensor {

using Shape = std::vector<std::size_t>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;  // flat, row-major
  std::vector<double> grad;    // empty until backward writes to it
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // nonzero when recorded as an op output

  std::size_t numel() const { return values.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-d array of doubles with value-semantics handle sharing. Gradients
// are tracked only while a Tape is active; otherwise a Tensor is just an
// immutable value that may be shared across threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  const std::vector<double>& values() const;
  // Sanctioned mutation point for the optimizer and test rigging. Never call
  // on a tensor that is recorded on a live tape.
  std::vector<double>& values_mut();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool requires_grad);

  // Copy of the gradient; all zeros when backward never reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  double item() const;                       // scalar tensors only
  double at(std::size_t i) const;            // rank-1
  double at(std::size_t i, std::size_t j) const;  // rank-2

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
};

// Records every differentiable op while alive (one active tape per thread,
// nested tapes stack). backward() replays the records once, last to first.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t recorded_ops() const { return records_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires_grad tensor reachable from loss. loss must be a scalar produced
  // by an op recorded on this tape.
  void backward(const Tensor& loss);

  static Tape* active();

  // Used by op implementations; pull reads out's grad and accumulates into
  // the inputs' grads. Marks out as recorded on this tape.
  void record(const Tensor& out, std::function<void()> pull);

 private:
  struct Record {
    std::shared_ptr<detail::Node> out;
    std::function<void()> pull;
  };
  std::vector<Record> records_;
  std::uint64_t id_;
  Tape* prev_;
};

}  // namespace titlegen::tensor
