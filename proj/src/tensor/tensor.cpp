#include "titlegen/tensor/tensor.hpp"

#include <atomic>
#include <sstream>

#include "titlegen/errors.hpp"

namespace titlegen::tensor {

namespace {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_numel(shape), 0.0),
                     requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_numel(shape), value),
                     requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    std::ostringstream msg;
    msg << "tensor value count " << values.size() << " does not match shape [";
    for (std::size_t i = 0; i < shape.size(); ++i)
      msg << (i ? "," : "") << shape[i];
    msg << "]";
    throw ShapeError(msg.str());
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape() on an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("dim(): axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const {
  if (!node_) return 0;
  return node_->numel();
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw ContractError("values() on an undefined tensor");
  return node_->values;
}

std::vector<double>& Tensor::values_mut() {
  if (!node_) throw ContractError("values_mut() on an undefined tensor");
  return node_->values;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  if (!node_) throw ContractError("set_requires_grad() on an undefined tensor");
  node_->requires_grad = requires_grad;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (!node_) throw ContractError("grad() on an undefined tensor");
  if (node_->grad.empty()) return std::vector<double>(node_->numel(), 0.0);
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a scalar tensor");
  return node_->values[0];
}

double Tensor::at(std::size_t i) const {
  if (rank() != 1) throw ShapeError("at(i) requires a rank-1 tensor");
  if (i >= node_->shape[0]) throw IndexError("at(): index out of range");
  return node_->values[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw ShapeError("at(i,j) requires a rank-2 tensor");
  if (i >= node_->shape[0] || j >= node_->shape[1])
    throw IndexError("at(): index out of range");
  return node_->values[i * node_->shape[1] + j];
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)), prev_(g_active_tape) {
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& out, std::function<void()> pull) {
  out.node_->tape_id = id_;
  records_.push_back({out.node_, std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() requires a scalar loss");
  if (loss.node()->tape_id != id_)
    throw ContractError("backward() loss was not recorded on this tape");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    // Skip ops nothing above ever pulled gradient into.
    if (!it->out->grad.empty()) it->pull();
  }
}

}  // namespace titlegen::tensor
