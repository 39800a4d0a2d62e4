#include "infotok/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace infotok::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::input: return "input";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::multiply: return "multiply";
        case Op::matmul: return "matmul";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::logsumexp: return "logsumexp";
        case Op::mean: return "mean";
        case Op::sum: return "sum";
        case Op::nonlin: return "nonlin";
        case Op::cosine_sim: return "cosine_sim";
        case Op::softmax_xent: return "softmax_xent";
        case Op::squared_error: return "squared_error";
    }
    return "?";
}

namespace {

std::string describe(NodeId id, const Node& n) {
    std::ostringstream os;
    os << "node #" << id << " (" << op_name(n.op);
    if (!n.label.empty()) os << " '" << n.label << "'";
    os << ")";
    return os.str();
}

} // namespace

std::size_t Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument("Graph: node id " + std::to_string(id) + " out of range");
    }
    return static_cast<std::size_t>(id);
}

void Graph::build_error(const std::string& what) const {
    throw std::invalid_argument("Graph: while adding node #" + std::to_string(nodes_.size()) +
                                ": " + what);
}

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    forward_done_ = false;
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::last_node() const {
    if (nodes_.empty()) throw std::logic_error("Graph: empty");
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(std::vector<std::size_t> shape, std::string label) {
    if (shape.empty() || shape.size() > 2) build_error("inputs must be rank 1 or 2");
    Node n;
    n.op = Op::input;
    n.shape = std::move(shape);
    n.label = std::move(label);
    NodeId id = push(std::move(n));
    input_ids_.push_back(id);
    return id;
}

NodeId Graph::constant(Tensor value, std::string label) {
    if (value.rank() == 0 || value.rank() > 2) build_error("constants must be rank 1 or 2");
    Node n;
    n.op = Op::constant;
    n.shape = value.shape();
    n.label = std::move(label);
    n.payload = std::move(value);
    return push(std::move(n));
}

NodeId Graph::constant_scalar(double v, std::string label) {
    return constant(Tensor::scalar(v), std::move(label));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) {
        build_error("add: shape mismatch between " + describe(a, na) + " and " + describe(b, nb));
    }
    Node n;
    n.op = Op::add;
    n.parents = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::multiply(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) {
        build_error("multiply: shape mismatch between " + describe(a, na) + " and " +
                    describe(b, nb));
    }
    Node n;
    n.op = Op::multiply;
    n.parents = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2) build_error("matmul: operands must be rank 2");
    if (na.shape[1] != nb.shape[0]) {
        build_error("matmul: inner dimensions differ for " + describe(a, na) + " and " +
                    describe(b, nb));
    }
    Node n;
    n.op = Op::matmul;
    n.parents = {a, b};
    n.shape = {na.shape[0], nb.shape[1]};
    return push(std::move(n));
}

NodeId Graph::exp(NodeId x) {
    Node n;
    n.op = Op::exp;
    n.parents = {x};
    n.shape = node(x).shape;
    return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::log;
    n.parents = {x};
    n.shape = node(x).shape;
    return push(std::move(n));
}

NodeId Graph::logsumexp(NodeId x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::logsumexp;
    n.parents = {x};
    // Reduces the last axis: vector -> scalar, matrix -> one value per row.
    n.shape = nx.shape.size() == 1 ? std::vector<std::size_t>{1}
                                   : std::vector<std::size_t>{nx.shape[0]};
    return push(std::move(n));
}

NodeId Graph::mean(NodeId x) {
    Node n;
    n.op = Op::mean;
    n.parents = {x};
    n.shape = {1};
    return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
    Node n;
    n.op = Op::sum;
    n.parents = {x};
    n.shape = {1};
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
    Node n;
    n.op = Op::nonlin;
    n.nonlin = NonlinKind::tanh;
    n.parents = {x};
    n.shape = node(x).shape;
    return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
    if (!(lo < hi)) build_error("clamp: requires lo < hi");
    Node n;
    n.op = Op::nonlin;
    n.nonlin = NonlinKind::clamp;
    n.clamp_lo = lo;
    n.clamp_hi = hi;
    n.parents = {x};
    n.shape = node(x).shape;
    return push(std::move(n));
}

NodeId Graph::cosine_similarity(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != nb.shape.size()) {
        build_error("cosine_sim: operands must have equal rank");
    }
    Node n;
    n.op = Op::cosine_sim;
    n.parents = {a, b};
    if (na.shape.size() == 1) {
        if (na.shape[0] != nb.shape[0]) build_error("cosine_sim: vector lengths differ");
        n.shape = {1};
    } else {
        if (na.shape[1] != nb.shape[1]) build_error("cosine_sim: row dimensions differ");
        // Pairwise cosines between rows of a and rows of b.
        n.shape = {na.shape[0], nb.shape[0]};
    }
    return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> targets) {
    const Node& nl = node(logits);
    std::size_t rows = nl.shape.size() == 1 ? 1 : nl.shape[0];
    std::size_t classes = nl.shape.size() == 1 ? nl.shape[0] : nl.shape[1];
    if (targets.size() != rows) {
        build_error("softmax_xent: expected " + std::to_string(rows) + " targets, got " +
                    std::to_string(targets.size()));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            build_error("softmax_xent: class index " + std::to_string(t) + " out of range [0," +
                        std::to_string(classes) + ")");
        }
    }
    Node n;
    n.op = Op::softmax_xent;
    n.parents = {logits};
    n.targets = std::move(targets);
    n.shape = {rows};
    return push(std::move(n));
}

NodeId Graph::squared_error(NodeId a, NodeId b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) {
        build_error("squared_error: shape mismatch between " + describe(a, na) + " and " +
                    describe(b, nb));
    }
    Node n;
    n.op = Op::squared_error;
    n.parents = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double c) {
    return multiply(x, constant(Tensor::full(node(x).shape, c)));
}

NodeId Graph::add_scalar(NodeId x, double c) {
    return add(x, constant(Tensor::full(node(x).shape, c)));
}

NodeId Graph::sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }

NodeId Graph::negate(NodeId x) { return scale(x, -1.0); }

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

const std::vector<Tensor>& Graph::forward(const std::vector<Tensor>& inputs) {
    if (inputs.size() != input_ids_.size()) {
        throw std::invalid_argument("Graph::forward: expected " +
                                    std::to_string(input_ids_.size()) + " inputs, got " +
                                    std::to_string(inputs.size()));
    }
    values_.assign(nodes_.size(), Tensor{});
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        NodeId id = input_ids_[i];
        if (inputs[i].shape() != nodes_[id].shape) {
            throw std::invalid_argument("Graph::forward: input " + std::to_string(i) +
                                        " shape " + inputs[i].shape_str() + " does not match " +
                                        describe(id, nodes_[id]) + " declared shape");
        }
        values_[id] = inputs[i];
        values_[id].clear_grad();
    }
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
        if (nodes_[id].op == Op::input) continue;
        eval_node(id);
        if (!values_[id].all_finite()) {
            throw EvalError(id, "Graph::forward: non-finite value produced by " +
                                    describe(id, nodes_[id]));
        }
    }
    forward_done_ = true;
    return values_;
}

void Graph::eval_node(NodeId id) {
    const Node& n = nodes_[id];
    auto& out = values_[id];
    switch (n.op) {
        case Op::input:
            break;
        case Op::constant:
            out = n.payload;
            break;
        case Op::add: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
            break;
        }
        case Op::multiply: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
            break;
        }
        case Op::matmul: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * c + j];
                    out[i * c + j] = acc;
                }
            }
            break;
        }
        case Op::exp: {
            const Tensor& a = values_[n.parents[0]];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
            break;
        }
        case Op::log: {
            const Tensor& a = values_[n.parents[0]];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
            break;
        }
        case Op::logsumexp: {
            const Tensor& a = values_[n.parents[0]];
            const std::size_t rows = n.shape[0];
            const std::size_t width = a.size() / rows;
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < rows; ++i) {
                double m = a[i * width];
                for (std::size_t j = 1; j < width; ++j) m = std::max(m, a[i * width + j]);
                double s = 0.0;
                for (std::size_t j = 0; j < width; ++j) s += std::exp(a[i * width + j] - m);
                out[i] = m + std::log(s);
            }
            break;
        }
        case Op::mean: {
            const Tensor& a = values_[n.parents[0]];
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
            out = Tensor::scalar(s / static_cast<double>(a.size()));
            break;
        }
        case Op::sum: {
            const Tensor& a = values_[n.parents[0]];
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
            out = Tensor::scalar(s);
            break;
        }
        case Op::nonlin: {
            const Tensor& a = values_[n.parents[0]];
            out = Tensor(n.shape);
            if (n.nonlin == NonlinKind::tanh) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
            } else {
                for (std::size_t i = 0; i < out.size(); ++i)
                    out[i] = std::min(std::max(a[i], n.clamp_lo), n.clamp_hi);
            }
            break;
        }
        case Op::cosine_sim: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            const std::size_t ra = a.rank() == 1 ? 1 : a.shape()[0];
            const std::size_t rb = b.rank() == 1 ? 1 : b.shape()[0];
            const std::size_t d = a.rank() == 1 ? a.shape()[0] : a.shape()[1];
            std::vector<double> norm_a(ra), norm_b(rb);
            for (std::size_t i = 0; i < ra; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += a[i * d + t] * a[i * d + t];
                norm_a[i] = std::sqrt(s);
                if (norm_a[i] == 0.0) {
                    throw EvalError(id, "Graph::forward: zero-norm row " + std::to_string(i) +
                                            " in left operand of " + describe(id, n));
                }
            }
            for (std::size_t i = 0; i < rb; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += b[i * d + t] * b[i * d + t];
                norm_b[i] = std::sqrt(s);
                if (norm_b[i] == 0.0) {
                    throw EvalError(id, "Graph::forward: zero-norm row " + std::to_string(i) +
                                            " in right operand of " + describe(id, n));
                }
            }
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < ra; ++i) {
                for (std::size_t j = 0; j < rb; ++j) {
                    double dot = 0.0;
                    for (std::size_t t = 0; t < d; ++t) dot += a[i * d + t] * b[j * d + t];
                    out[i * rb + j] = dot / (norm_a[i] * norm_b[j]);
                }
            }
            break;
        }
        case Op::softmax_xent: {
            const Tensor& a = values_[n.parents[0]];
            const std::size_t rows = n.shape[0];
            const std::size_t classes = a.size() / rows;
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < rows; ++i) {
                double m = a[i * classes];
                for (std::size_t j = 1; j < classes; ++j) m = std::max(m, a[i * classes + j]);
                double s = 0.0;
                for (std::size_t j = 0; j < classes; ++j) s += std::exp(a[i * classes + j] - m);
                const double lse = m + std::log(s);
                out[i] = lse - a[i * classes + static_cast<std::size_t>(n.targets[i])];
            }
            break;
        }
        case Op::squared_error: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            out = Tensor(n.shape);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double d = a[i] - b[i];
                out[i] = d * d;
            }
            break;
        }
    }
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id);
    if (!forward_done_) throw std::logic_error("Graph::value: forward has not been run");
    return values_[id];
}

double Graph::scalar_value(NodeId id) const {
    const Tensor& t = value(id);
    if (t.size() != 1) throw std::logic_error("Graph::scalar_value: node is not scalar");
    return t[0];
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

std::vector<Tensor> Graph::backward(NodeId output, const Tensor& seed) {
    check_id(output);
    if (!forward_done_) {
        throw std::logic_error("Graph::backward: forward must be run before backward");
    }
    if (seed.shape() != nodes_[output].shape) {
        throw std::invalid_argument("Graph::backward: seed shape " + seed.shape_str() +
                                    " does not match output " +
                                    describe(output, nodes_[output]));
    }
    adjoints_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        adjoints_[i].assign(values_[i].size(), 0.0);
    }
    adjoints_[output] = seed.data();
    for (NodeId id = output; id >= 0; --id) {
        backprop_node(id);
    }
    std::vector<Tensor> grads;
    grads.reserve(input_ids_.size());
    for (NodeId id : input_ids_) {
        Tensor t = values_[id];
        t.set_grad(adjoints_[id]);
        grads.push_back(std::move(t));
    }
    return grads;
}

const std::vector<double>& Graph::adjoint(NodeId id) const {
    check_id(id);
    if (adjoints_.empty()) throw std::logic_error("Graph::adjoint: backward has not been run");
    return adjoints_[id];
}

void Graph::backprop_node(NodeId id) {
    const Node& n = nodes_[id];
    const auto& g = adjoints_[id];
    if (n.parents.empty()) return;
    bool any = false;
    for (double v : g) {
        if (v != 0.0) {
            any = true;
            break;
        }
    }
    if (!any) return;

    switch (n.op) {
        case Op::input:
        case Op::constant:
            break;
        case Op::add: {
            auto& da = adjoints_[n.parents[0]];
            auto& db = adjoints_[n.parents[1]];
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] += g[i];
            }
            break;
        }
        case Op::multiply: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            auto& da = adjoints_[n.parents[0]];
            auto& db = adjoints_[n.parents[1]];
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i] * b[i];
                db[i] += g[i] * a[i];
            }
            break;
        }
        case Op::matmul: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            auto& da = adjoints_[n.parents[0]];
            auto& db = adjoints_[n.parents[1]];
            const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
            // dA += G . B^T, dB += A^T . G
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * b[t * c + j];
                    da[i * k + t] += acc;
                }
            }
            for (std::size_t t = 0; t < k; ++t) {
                for (std::size_t j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < r; ++i) acc += a[i * k + t] * g[i * c + j];
                    db[t * c + j] += acc;
                }
            }
            break;
        }
        case Op::exp: {
            const Tensor& y = values_[id];
            auto& da = adjoints_[n.parents[0]];
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
            break;
        }
        case Op::log: {
            const Tensor& a = values_[n.parents[0]];
            auto& da = adjoints_[n.parents[0]];
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a[i];
            break;
        }
        case Op::logsumexp: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& y = values_[id];
            auto& da = adjoints_[n.parents[0]];
            const std::size_t rows = y.size();
            const std::size_t width = a.size() / rows;
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < width; ++j) {
                    da[i * width + j] += g[i] * std::exp(a[i * width + j] - y[i]);
                }
            }
            break;
        }
        case Op::mean: {
            const Tensor& a = values_[n.parents[0]];
            auto& da = adjoints_[n.parents[0]];
            const double s = g[0] / static_cast<double>(a.size());
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += s;
            break;
        }
        case Op::sum: {
            auto& da = adjoints_[n.parents[0]];
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
            break;
        }
        case Op::nonlin: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& y = values_[id];
            auto& da = adjoints_[n.parents[0]];
            if (n.nonlin == NonlinKind::tanh) {
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] >= n.clamp_lo && a[i] <= n.clamp_hi) da[i] += g[i];
                }
            }
            break;
        }
        case Op::cosine_sim: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            const Tensor& y = values_[id];
            auto& da = adjoints_[n.parents[0]];
            auto& db = adjoints_[n.parents[1]];
            const std::size_t ra = a.rank() == 1 ? 1 : a.shape()[0];
            const std::size_t rb = b.rank() == 1 ? 1 : b.shape()[0];
            const std::size_t d = a.rank() == 1 ? a.shape()[0] : a.shape()[1];
            std::vector<double> norm_a(ra), norm_b(rb);
            for (std::size_t i = 0; i < ra; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += a[i * d + t] * a[i * d + t];
                norm_a[i] = std::sqrt(s);
            }
            for (std::size_t j = 0; j < rb; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += b[j * d + t] * b[j * d + t];
                norm_b[j] = std::sqrt(s);
            }
            // d cos(a_i, b_j) / d a_i = (b_j / |b_j| - cos * a_i / |a_i|) / |a_i|
            for (std::size_t i = 0; i < ra; ++i) {
                for (std::size_t j = 0; j < rb; ++j) {
                    const double gij = g[i * rb + j];
                    if (gij == 0.0) continue;
                    const double cij = y[i * rb + j];
                    for (std::size_t t = 0; t < d; ++t) {
                        const double ua = a[i * d + t] / norm_a[i];
                        const double ub = b[j * d + t] / norm_b[j];
                        da[i * d + t] += gij * (ub - cij * ua) / norm_a[i];
                        db[j * d + t] += gij * (ua - cij * ub) / norm_b[j];
                    }
                }
            }
            break;
        }
        case Op::softmax_xent: {
            const Tensor& a = values_[n.parents[0]];
            auto& da = adjoints_[n.parents[0]];
            const std::size_t rows = n.shape[0];
            const std::size_t classes = a.size() / rows;
            for (std::size_t i = 0; i < rows; ++i) {
                if (g[i] == 0.0) continue;
                double m = a[i * classes];
                for (std::size_t j = 1; j < classes; ++j) m = std::max(m, a[i * classes + j]);
                double s = 0.0;
                for (std::size_t j = 0; j < classes; ++j) s += std::exp(a[i * classes + j] - m);
                for (std::size_t j = 0; j < classes; ++j) {
                    const double p = std::exp(a[i * classes + j] - m) / s;
                    const double onehot = (static_cast<std::size_t>(n.targets[i]) == j) ? 1.0 : 0.0;
                    da[i * classes + j] += g[i] * (p - onehot);
                }
            }
            break;
        }
        case Op::squared_error: {
            const Tensor& a = values_[n.parents[0]];
            const Tensor& b = values_[n.parents[1]];
            auto& da = adjoints_[n.parents[0]];
            auto& db = adjoints_[n.parents[1]];
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double twice = 2.0 * (a[i] - b[i]) * g[i];
                da[i] += twice;
                db[i] -= twice;
            }
            break;
        }
    }
}

} // namespace infotok::ad
