#include "empsoa/tensor.hpp"

#include <sstream>

#include "empsoa/errors.hpp"

namespace empsoa {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto node = std::make_shared<detail::Node>();
  node->value.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size())
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(data));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }
std::vector<double> Tensor::to_vector() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone() const { return from(shape(), to_vector()); }

namespace {
thread_local Tape* active_tape = nullptr;
}

Tape* Tape::active() { return active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }
Tape::Scope::~Scope() { active_tape = previous_; }

void Tape::record(std::shared_ptr<detail::Node> output, BackwardFn fn) {
  entries_.push_back({std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad())
    throw ContractError("backward on a loss that does not depend on any trainable tensor");
  if (entries_.empty()) throw ContractError("backward on an empty tape");
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (!it->output->grad.empty()) it->backward();
  entries_.clear();
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw ContractError("backward without an active tape");
  tape->backward(loss);
}

}  // namespace empsoa
