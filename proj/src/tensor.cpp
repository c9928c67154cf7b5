#include "aggnet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "aggnet/errors.hpp"

AGGNET_BEGIN_NAMESPACE

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<Impl>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
  impl_->shape = shape;
  impl_->data.assign(shape.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : Tensor(shape) {
  if (values.size() != shape.size()) {
    throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.size()) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
  static const Shape empty{};
  return impl_ ? impl_->shape : empty;
}

std::span<Real> Tensor::data() { return impl_ ? std::span<Real>(impl_->data) : std::span<Real>(); }

std::span<const Real> Tensor::data() const {
  return impl_ ? std::span<const Real>(impl_->data) : std::span<const Real>();
}

Real& Tensor::at(int n, int c, int h, int w) {
  const Shape& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

Real Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

Real Tensor::item() const {
  if (!impl_ || impl_->data.size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape().str());
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (impl_ && impl_->graph != nullptr) {
    throw ContractError("set_requires_grad on a non-leaf tensor");
  }
  if (impl_) impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<Real> Tensor::grad() { return impl_ ? std::span<Real>(impl_->grad) : std::span<Real>(); }

std::span<const Real> Tensor::grad() const {
  return impl_ ? std::span<const Real>(impl_->grad) : std::span<const Real>();
}

std::span<Real> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

void Tensor::clear_grad() const {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  Tensor out(impl_->shape);
  out.impl_->data = impl_->data;
  return out;
}

bool Tensor::produced_by(const Graph& g) const { return impl_ && impl_->graph == &g; }

namespace {
thread_local Graph* g_current = nullptr;
}

Graph::Graph() : previous_(g_current) { g_current = this; }

Graph::~Graph() {
  g_current = previous_;
  // Detach outputs so surviving handles no longer claim this graph.
  for (auto& node : nodes_) {
    if (node.output.impl_ && node.output.impl_->graph == this) node.output.impl_->graph = nullptr;
  }
}

Graph* Graph::current() { return g_current; }

bool Graph::should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_current == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->requires_grad(); });
}

bool Graph::should_record(const std::vector<Tensor>& inputs) {
  if (g_current == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void Graph::record(const char* op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  output.impl_->requires_grad = true;
  output.impl_->graph = this;
  output.impl_->node = nodes_.size();
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(fn)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.produced_by(*this)) {
    throw ContractError("backward: tensor was not produced by this graph");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + loss.shape().str());
  }
  for (auto& node : nodes_) node.output.clear_grad();
  Tensor seed = loss;
  seed.grad_buffer()[0] = Real(1);
  visited_.clear();
  for (std::size_t i = loss.impl_->node + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.output.has_grad()) continue;
    visited_.push_back(i);
    node.backward();
  }
}

AGGNET_END_NAMESPACE
