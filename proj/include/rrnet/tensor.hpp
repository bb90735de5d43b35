#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rrnet/errors.hpp"

namespace rrnet {

using Index = std::int64_t;

// (batch, channels, height, width)
struct Shape4 {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index count() const { return n * c * h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <typename Scalar>
class Tape;

// Rank-4 tensor handle. Copies share storage, so gradients written through
// one handle are visible through every other handle of the same tensor;
// that is what lets a value consumed by several operations accumulate the
// sum of their gradient contributions.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape4 shape, Scalar fill = Scalar(0))
      : d_(std::make_shared<Payload>()) {
    validate_shape(shape);
    d_->shape = shape;
    d_->values.assign(static_cast<std::size_t>(shape.count()), fill);
  }

  static Tensor from_values(Shape4 shape, std::vector<Scalar> values) {
    validate_shape(shape);
    if (static_cast<Index>(values.size()) != shape.count()) {
      throw ShapeError("spatial", "tensor: " + std::to_string(values.size()) +
                                      " values for shape " + shape.str());
    }
    Tensor t;
    t.d_ = std::make_shared<Payload>();
    t.d_->shape = shape;
    t.d_->values = std::move(values);
    return t;
  }

  bool valid() const { return d_ != nullptr; }
  const Shape4& shape() const { return d_->shape; }
  Index size() const { return d_->shape.count(); }

  Scalar* data() { return d_->values.data(); }
  const Scalar* data() const { return d_->values.data(); }
  std::vector<Scalar>& values() { return d_->values; }
  const std::vector<Scalar>& values() const { return d_->values; }

  Index offset(Index n, Index c, Index h, Index w) const {
    const Shape4& s = d_->shape;
    return ((n * s.c + c) * s.h + h) * s.w + w;
  }
  Scalar& at(Index n, Index c, Index h, Index w) {
    return d_->values[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  Scalar at(Index n, Index c, Index h, Index w) const {
    return d_->values[static_cast<std::size_t>(offset(n, c, h, w))];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  void ensure_grad() {
    if (d_->grad.empty()) {
      d_->grad.assign(static_cast<std::size_t>(size()), Scalar(0));
    }
  }
  void zero_grad() {
    std::fill(d_->grad.begin(), d_->grad.end(), Scalar(0));
  }
  Scalar* grad_data() { return d_->grad.data(); }
  const Scalar* grad_data() const { return d_->grad.data(); }
  std::vector<Scalar>& grad() { return d_->grad; }
  const std::vector<Scalar>& grad() const { return d_->grad; }

  // Deep copy: fresh storage, values only (no grad, same requires_grad flag).
  Tensor clone() const {
    Tensor t = from_values(shape(), d_->values);
    t.set_requires_grad(requires_grad());
    return t;
  }

  // Storage identity, used by the tape to tell leaves from interior nodes.
  const void* key() const { return d_.get(); }
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Payload {
    Shape4 shape;
    std::vector<Scalar> values;
    std::vector<Scalar> grad;  // empty until first needed
    bool requires_grad = false;
  };

  static void validate_shape(const Shape4& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("spatial", "tensor: negative dimension in " + s.str());
    }
  }

  std::shared_ptr<Payload> d_;
};

// A named trainable tensor.
template <typename Scalar>
struct ParamTensor {
  std::string name;
  Tensor<Scalar> value;
};

// Reverse-mode tape. Constructing a Tape makes it the active recording
// target for the current thread; operations executed while a tape is active
// append one node per differentiable result. Backward replays the nodes in
// reverse recorded order exactly once.
//
// Interior (tape-produced) gradient buffers are zeroed at the start of each
// backward pass; leaf tensors (inputs, parameters) accumulate across passes
// until explicitly zeroed.
template <typename Scalar>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(Tensor<Scalar> output, std::function<void()> backward_fn) {
    produced_.insert(output.key());
    nodes_.push_back(Node{std::move(output), std::move(backward_fn)});
  }

  bool produced(const Tensor<Scalar>& t) const {
    return t.valid() && produced_.count(t.key()) > 0;
  }

  std::size_t node_count() const { return nodes_.size(); }

  void backward(const Tensor<Scalar>& loss) {
    if (!produced(loss)) {
      throw TapeError("backward: tensor was not produced on this tape");
    }
    if (loss.size() != 1) {
      throw ShapeError("spatial", "backward: loss must be a single scalar, got " +
                                      loss.shape().str());
    }
    for (Node& node : nodes_) {
      node.output.ensure_grad();
      node.output.zero_grad();
    }
    Tensor<Scalar> seed = loss;
    seed.grad_data()[0] = Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->fn();
    }
  }

 private:
  struct Node {
    Tensor<Scalar> output;
    std::function<void()> fn;
  };

  std::vector<Node> nodes_;
  std::unordered_set<const void*> produced_;
  Tape* prev_;
  static thread_local Tape* active_;
};

template <typename Scalar>
thread_local Tape<Scalar>* Tape<Scalar>::active_ = nullptr;

// Backward through the innermost active tape.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (tape == nullptr) {
    throw TapeError("backward: no active tape");
  }
  tape->backward(loss);
}

}  // namespace rrnet
