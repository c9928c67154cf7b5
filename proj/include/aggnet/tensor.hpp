#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aggnet/precision.hpp"

AGGNET_BEGIN_NAMESPACE

/// (batch, channels, height, width).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Graph;

/// Dense row-major (n, c, h, w) array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is what the
/// autograd tape and parameter stores rely on. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor ones(Shape shape) { return Tensor(shape, Real(1)); }
  static Tensor scalar(Real v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const { return shape().size(); }

  std::span<Real> data();
  std::span<const Real> data() const;
  Real& at(int n, int c, int h, int w);
  Real at(int n, int c, int h, int w) const;
  Real& operator[](std::size_t i) { return data()[i]; }
  Real operator[](std::size_t i) const { return data()[i]; }
  /// Value of a single-element tensor.
  Real item() const;

  bool requires_grad() const;
  /// Marks a leaf as trainable. Returns *this for chaining.
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<Real> grad();
  std::span<const Real> grad() const;
  /// Gradient buffer, allocated as zeros on first use. Const because the
  /// handle, not the storage, is const: backward closures hold const copies.
  std::span<Real> grad_buffer() const;
  void zero_grad() const;
  void clear_grad() const;

  /// Deep copy of the values; the copy is a fresh leaf without gradient.
  Tensor clone() const;
  /// Same storage identity.
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

  /// True if this tensor is the output of an op recorded on `g`.
  bool produced_by(const Graph& g) const;

 private:
  friend class Graph;
  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
    const Graph* graph = nullptr;
    std::size_t node = 0;
  };
  std::shared_ptr<Impl> impl_;
};

/// Define-by-run tape. Constructing a Graph makes it the recording target for
/// the current thread until it is destroyed; ops executed meanwhile whose
/// inputs require gradients append a node. Graphs nest (innermost wins).
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Recording target of this thread, or nullptr.
  static Graph* current();

  /// True when an op with these inputs must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> inputs);
  static bool should_record(const std::vector<Tensor>& inputs);

  /// Appends a node. `output` becomes a non-leaf that requires grad; `fn`
  /// reads output's gradient and accumulates into the inputs' gradients.
  void record(const char* op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

  /// Reverse-mode sweep from a scalar produced by this graph. Non-leaf
  /// gradients are reset first, so calling twice accumulates exactly twice
  /// into leaves. Throws ContractError if `loss` is not a recorded scalar.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t i) const { return nodes_[i].op; }
  /// Indices of nodes visited by the last backward call, in visit order.
  const std::vector<std::size_t>& last_visit_order() const { return visited_; }

 private:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
  Graph* previous_ = nullptr;
};

AGGNET_END_NAMESPACE
