#include "mmfx/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mmfx {

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != static_cast<int>(data.size()))
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> s) {
  int n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> s, double value) {
  int n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), value));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data)
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + where);
}

void GradStore::add(int node, const double* g, size_t n) {
  auto& buf = grads_[static_cast<size_t>(node)];
  if (buf.empty()) buf.assign(static_cast<size_t>(sizes_[static_cast<size_t>(node)]), 0.0);
  for (size_t i = 0; i < n; ++i) buf[i] += g[i];
}

void GradStore::add_at(int node, size_t offset, double g) {
  auto& buf = grads_[static_cast<size_t>(node)];
  if (buf.empty()) buf.assign(static_cast<size_t>(sizes_[static_cast<size_t>(node)]), 0.0);
  buf[offset] += g;
}

void GradStore::seed(int node, double value) {
  auto& buf = grads_[static_cast<size_t>(node)];
  buf.assign(static_cast<size_t>(sizes_[static_cast<size_t>(node)]), value);
}

int Tape::new_node(const Tensor& t) {
  node_sizes_.push_back(t.size());
  node_shapes_.push_back(t.shape);
  return static_cast<int>(node_sizes_.size()) - 1;
}

int Tape::watch(Tensor& t) {
  if (t.tape == this && t.node >= 0) return t.node;
  t.tape = this;
  t.node = new_node(t);
  return t.node;
}

int Tape::record(Tensor& out, std::vector<int> input_nodes, BackwardFn fn) {
  out.tape = this;
  out.node = new_node(out);
  entries_.push_back(Entry{out.node, std::move(input_nodes), std::move(fn)});
  return out.node;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape != this || loss.node < 0) throw Error("backward: loss is not a node on this tape");
  if (loss.size() != 1) throw Error("backward: loss must be scalar, got shape " + loss.shape_str());

  GradStore grads(node_sizes_);
  grads.seed(loss.node, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!grads.has(it->out)) continue;  // not on any path to the loss
    it->fn(grads.get(it->out), grads);
  }

  last_grads_.assign(static_cast<size_t>(num_nodes()), {});
  for (int n = 0; n < num_nodes(); ++n)
    if (grads.has(n)) last_grads_[static_cast<size_t>(n)] = grads.get(n);
}

Tensor Tape::grad_of(const Tensor& t) const {
  if (t.tape != this || t.node < 0) throw Error("grad_of: tensor is not on this tape");
  const auto& g = last_grads_.at(static_cast<size_t>(t.node));
  if (g.empty()) return Tensor::zeros(t.shape);
  return Tensor(t.shape, g);
}

void Tape::clear() {
  entries_.clear();
  node_sizes_.clear();
  node_shapes_.clear();
  last_grads_.clear();
}

}  // namespace mmfx
