#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cecr/rng.hpp"

namespace cecr {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything the
// model needs; a scalar is a rank-1 tensor of size 1.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;  // requires size() == 1
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  void fill(double v);
  bool all_finite() const;
};

// Named trainable weight with a gradient accumulator of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, Tensor value);
  void zero_grad();
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward walks
// the tape once in reverse. A graph is single-owner and not thread-safe;
// build one per batch.
class Graph {
 public:
  using NodeId = int;

  NodeId input(Tensor value, std::string label = "input");
  NodeId param(Parameter& p);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

  // (m,k) x (k,n) -> (m,n); also (m,k) x (k) -> (m).
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);        // same shape
  NodeId mul(NodeId a, NodeId b);        // elementwise, same shape
  NodeId scale(NodeId a, double c);
  NodeId scale_by(NodeId a, NodeId s);   // s is a scalar node
  NodeId concat(const std::vector<NodeId>& parts);  // rank-1, axis 0
  NodeId slice(NodeId a, std::size_t offset, std::size_t len);  // flat offset
  NodeId row_softmax(NodeId a);          // softmax over the last axis
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sum(NodeId a);                  // scalar
  NodeId mean(NodeId a);                 // scalar
  NodeId pick(NodeId a, std::size_t index);  // scalar a[index], rank-1 input
  NodeId log(NodeId a);                  // log(max(x, 1e-12))
  NodeId gather(NodeId table, const std::vector<int>& ids);  // (n, dim)
  NodeId dropout(NodeId a, double p, bool train, RngStream& rng);

  // Fused LSTM step with gate order [input, forget, cell, output] in the
  // stacked weights. w_ih is (4H, in), w_hh is (4H, H), b is (4H); returns
  // the concatenation [h_next; c_next] of width 2H. Equivalent to composing
  // the primitive ops, but one tape node instead of a dozen.
  NodeId lstm_cell(NodeId w_ih, NodeId w_hh, NodeId b, NodeId x, NodeId h_prev,
                   NodeId c_prev);

  // Accumulates d loss / d value into every Parameter seen via param().
  void backward(NodeId loss);

  std::size_t node_count() const { return nodes_.size(); }
  // Text dump of the tape, one node per line.
  std::string dump() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::string label;
    std::vector<NodeId> parents;
    std::function<void(Graph&, NodeId)> back;
    Parameter* bound = nullptr;
  };

  NodeId emplace(Tensor value, std::string label, std::vector<NodeId> parents,
                 std::function<void(Graph&, NodeId)> back);
  Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Max relative error between analytic gradients and central differences.
// f must be deterministic and must route all trainable values through the
// given parameters.
double grad_check(const std::function<double()>& f,
                  const std::function<void()>& compute_grads,
                  const std::vector<Parameter*>& params, double h = 1e-5);

}  // namespace cecr
