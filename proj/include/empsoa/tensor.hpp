#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace empsoa {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

// Dense row-major tensor with value semantics for shape/data and shared
// identity: copies of a Tensor refer to the same storage, which is what lets
// model components and the parameter store hold the same parameter.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> values);  // shape {1, n}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;  // zeros when no gradient has flowed
  void zero_grad();

  // Fresh storage holding the same values, detached from any tape.
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the primitives executed during one forward pass.
// Operations are recorded only while a tape is active on the calling thread
// and at least one operand requires a gradient; otherwise they run in
// inference mode. Each thread has its own active tape.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1, runs every recorded backward rule in exact
  // reverse order and then discards the record.
  void backward(const Tensor& loss);

  void record(std::shared_ptr<detail::Node> output, BackwardFn fn);

  static Tape* active();

  // Makes a tape active on this thread for the lifetime of the guard.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Entry {
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

// Backward through the thread's active tape.
void backward(const Tensor& loss);

}  // namespace empsoa
