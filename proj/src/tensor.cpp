#include "mdiqa/tensor.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace mdiqa {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    Tensor::BackwardFn backward;
    std::string op = "leaf";
    std::uint64_t sequence = 0;

    bool is_leaf() const { return !backward; }
};

} // namespace detail

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape))
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
    return node;
}

detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
    if (!node)
        throw ContractError("tensor: use of an undefined tensor");
    return *node;
}

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, std::string op,
                           BackwardFn backward) {
    bool needs_grad = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs)
            needs_grad = needs_grad || (in.defined() && in.requires_grad());
    }
    auto node = make_node(std::move(shape), std::move(values), needs_grad);
    node->op = std::move(op);
    if (needs_grad) {
        node->backward = std::move(backward);
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs)
            if (in.defined() && in.requires_grad())
                node->inputs.push_back(in.node_);
    }
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).values.size(); }

std::span<const double> Tensor::values() const { return checked(node_).values; }

std::span<double> Tensor::mutable_values() { return checked(node_).values; }

double Tensor::item() const {
    const auto& n = checked(node_);
    if (n.values.size() != 1)
        throw ShapeError("tensor: item() on tensor of shape " + shape_str(n.shape));
    return n.values[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) { checked(node_).requires_grad = flag; }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return grad_buffer(); }

std::span<double> Tensor::grad_buffer() const {
    auto& n = checked(node_);
    if (n.grad.size() != n.values.size())
        n.grad.assign(n.values.size(), 0.0);
    return n.grad;
}

void Tensor::zero_grad() {
    auto& n = checked(node_);
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

const std::string& Tensor::op() const { return checked(node_).op; }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
    const auto& n = checked(node_);
    return from(n.shape, n.values, requires_grad);
}

void Tensor::backward() const {
    const auto& n = checked(node_);
    if (n.values.size() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(n.shape));
    if (!n.requires_grad)
        throw ContractError("backward: loss does not depend on any tensor that requires a gradient");
    Tape::record(*this).run_backward();
}

Tape Tape::record(const Tensor& root) {
    Tape tape;
    if (!root.defined())
        throw ContractError("tape: undefined root");
    std::unordered_set<detail::Node*> seen;
    std::vector<std::shared_ptr<detail::Node>> stack{root.node_};
    while (!stack.empty()) {
        auto node = std::move(stack.back());
        stack.pop_back();
        if (!node->requires_grad || !seen.insert(node.get()).second)
            continue;
        for (const auto& in : node->inputs)
            stack.push_back(in);
        tape.keep_alive_.push_back(std::move(node));
    }
    // Creation order is a topological order: an op's output is always created
    // after its inputs.
    std::sort(tape.keep_alive_.begin(), tape.keep_alive_.end(),
              [](const auto& a, const auto& b) { return a->sequence < b->sequence; });
    tape.nodes_.reserve(tape.keep_alive_.size());
    for (const auto& n : tape.keep_alive_)
        tape.nodes_.push_back(n.get());
    return tape;
}

std::vector<std::string> Tape::ops() const {
    std::vector<std::string> out;
    out.reserve(nodes_.size());
    for (const auto* n : nodes_)
        out.push_back(n->op);
    return out;
}

void Tape::run_backward() {
    if (nodes_.empty())
        return;
    // Interior gradients are per-sweep scratch; only leaves accumulate.
    for (auto* n : nodes_)
        if (!n->is_leaf())
            n->grad.assign(n->values.size(), 0.0);
    auto* root = nodes_.back();
    if (root->grad.size() != root->values.size())
        root->grad.assign(root->values.size(), 0.0);
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto* n = *it;
        if (n->is_leaf())
            continue;
        n->backward(n->grad);
    }
    // Release interior scratch; activations stay alive through the graph.
    for (auto* n : nodes_)
        if (!n->is_leaf())
            std::vector<double>().swap(n->grad);
}

} // namespace mdiqa
