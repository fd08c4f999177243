#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmfx/errors.hpp"

namespace mmfx {

class Tape;

// Dense row-major tensor of 64-bit floats. A tensor optionally carries a
// handle (tape, node) into the differentiation tape that produced it; plain
// value tensors have tape == nullptr and take no part in backpropagation.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  int size() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool on_tape() const { return tape != nullptr && node >= 0; }
  // Value copy without the tape handle.
  Tensor detached() const { return Tensor(shape, data); }

  std::string shape_str() const;
};

int shape_numel(const std::vector<int>& shape);

// Throws NumericError naming `where` if any entry is NaN or infinite.
void check_finite(const Tensor& t, const std::string& where);

// Named, optionally trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}
};

// Gradient accumulators during a backward sweep. Accessed by the backward
// rules recorded on the tape.
class GradStore {
 public:
  explicit GradStore(const std::vector<int>& node_sizes) : grads_(node_sizes.size()), sizes_(node_sizes) {}

  bool has(int node) const { return !grads_[static_cast<size_t>(node)].empty(); }

  const std::vector<double>& get(int node) const { return grads_[static_cast<size_t>(node)]; }

  // Accumulate (sum over fan-out).
  void add(int node, const double* g, size_t n);
  void add_at(int node, size_t offset, double g);
  void seed(int node, double value);

 private:
  std::vector<std::vector<double>> grads_;
  std::vector<int> sizes_;
};

using BackwardFn = std::function<void(const std::vector<double>& gout, GradStore& grads)>;

// Reverse-mode differentiation tape. Primitive ops append entries in
// execution order (so inputs always precede their consumers); backward() does
// one reverse traversal seeding d(loss)/d(loss) = 1. Single-threaded.
class Tape {
 public:
  // Registers a leaf (input or parameter) tensor on this tape.
  int watch(Tensor& t);

  // Records an op: marks `out` as produced by this tape. Input node ids < 0
  // denote constants; backward rules skip them.
  int record(Tensor& out, std::vector<int> input_nodes, BackwardFn fn);

  // Runs the reverse sweep from a scalar loss node. Gradients of all nodes
  // are retained until the next backward()/clear(). Unreached nodes read as
  // exact zeros.
  void backward(const Tensor& loss);

  // Gradient of the loss w.r.t. `t` (zeros if t was never reached). Only
  // valid after backward().
  Tensor grad_of(const Tensor& t) const;

  int num_nodes() const { return static_cast<int>(node_sizes_.size()); }
  void clear();

 private:
  struct Entry {
    int out;
    std::vector<int> inputs;
    BackwardFn fn;
  };

  int new_node(const Tensor& t);

  std::vector<Entry> entries_;
  std::vector<int> node_sizes_;
  std::vector<std::vector<int>> node_shapes_;
  std::vector<std::vector<double>> last_grads_;
};

}  // namespace mmfx
