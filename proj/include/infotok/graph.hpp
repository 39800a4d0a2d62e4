#pragma once

#include "infotok/tensor.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace infotok::ad {

using NodeId = int;

enum class Op {
    input,
    constant,
    add,
    multiply,
    matmul,
    exp,
    log,
    logsumexp,
    mean,
    sum,
    nonlin,
    cosine_sim,
    softmax_xent,
    squared_error,
};

enum class NonlinKind { tanh, clamp };

const char* op_name(Op op);

// Thrown when a forward pass produces a non-finite value; carries the node
// that produced it so training can abort with a usable message.
class EvalError : public std::runtime_error {
public:
    EvalError(NodeId node, const std::string& what) : std::runtime_error(what), node_(node) {}
    NodeId node() const { return node_; }

private:
    NodeId node_ = -1;
};

struct Node {
    Op op = Op::input;
    std::vector<NodeId> parents;
    std::vector<std::size_t> shape;
    std::string label;

    NonlinKind nonlin = NonlinKind::tanh;
    double clamp_lo = 0.0;
    double clamp_hi = 0.0;
    std::vector<int> targets; // softmax_xent class indices
    Tensor payload;           // constant value
};

// Reverse-mode tape over a fixed primitive set. Nodes are appended in
// evaluation order; parent indices always point backwards, so the stored
// order is already topological. One instance is single-threaded; distinct
// instances share nothing.
class Graph {
public:
    NodeId input(std::vector<std::size_t> shape, std::string label = "");
    NodeId constant(Tensor value, std::string label = "");
    NodeId constant_scalar(double v, std::string label = "");

    NodeId add(NodeId a, NodeId b);
    NodeId multiply(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId logsumexp(NodeId x);
    NodeId mean(NodeId x);
    NodeId sum(NodeId x);
    NodeId tanh(NodeId x);
    NodeId clamp(NodeId x, double lo, double hi);
    NodeId cosine_similarity(NodeId a, NodeId b);
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> targets);
    NodeId squared_error(NodeId a, NodeId b);

    // Sugar assembled from the primitives above.
    NodeId scale(NodeId x, double c);       // multiply by a constant filled with c
    NodeId add_scalar(NodeId x, double c);  // add a constant filled with c
    NodeId sub(NodeId a, NodeId b);
    NodeId negate(NodeId x);

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_inputs() const { return input_ids_.size(); }
    NodeId input_id(std::size_t i) const { return input_ids_.at(i); }
    NodeId last_node() const;
    const Node& node(NodeId id) const { return nodes_.at(check_id(id)); }
    const std::vector<std::size_t>& node_shape(NodeId id) const { return node(id).shape; }

    // Evaluates every node in order; inputs are matched positionally against
    // the declared input nodes. Deterministic; rejects non-finite results.
    const std::vector<Tensor>& forward(const std::vector<Tensor>& inputs);
    bool forward_done() const { return forward_done_; }
    const Tensor& value(NodeId id) const;
    double scalar_value(NodeId id) const;

    // Reverse accumulation of seed . d(output)/d(node). Returns one tensor
    // per declared input, data = bound input values, grad slot = gradient.
    std::vector<Tensor> backward(NodeId output, const Tensor& seed);
    const std::vector<double>& adjoint(NodeId id) const;

private:
    NodeId push(Node n);
    std::size_t check_id(NodeId id) const;
    [[noreturn]] void build_error(const std::string& what) const;
    void eval_node(NodeId id);
    void backprop_node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> input_ids_;
    std::vector<Tensor> values_;
    std::vector<std::vector<double>> adjoints_;
    bool forward_done_ = false;
};

} // namespace infotok::ad
