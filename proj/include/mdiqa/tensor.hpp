#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mdiqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Handle to a node of the differentiable computation graph.
///
/// Copies share the underlying storage, so a parameter tensor can be handed to
/// the optimizer and the model at once. Results of operations record their
/// inputs only when at least one input requires a gradient and gradient
/// recording is enabled on the calling thread.
class Tensor {
public:
    /// Receives dL/d(output) and accumulates into the inputs' gradients.
    using BackwardFn = std::function<void(std::span<const double> out_grad)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    /// Builds the output of an operation. `backward` is dropped (and the inputs
    /// are not retained) when no input needs a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                              std::string op, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    /// In-place access; mutating a tensor that already feeds a graph is the
    /// caller's responsibility (used for parameter updates and probes).
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    /// Gradient storage; zeros if backward has not reached this tensor yet.
    std::span<const double> grad() const;
    /// Lazily allocated zero-filled gradient buffer for accumulation.
    std::span<double> grad_buffer() const;
    void zero_grad();

    const std::string& op() const;

    /// A new leaf with copied values and no history.
    Tensor detach() const;
    /// Deep copy with the given grad flag.
    Tensor clone(bool requires_grad) const;

    /// Reverse sweep from this scalar. Leaf gradients accumulate across calls.
    void backward() const;

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    detail::Node* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
    friend class Tape;
};

/// Ordered record of the operations that produced a tensor, in execution order.
class Tape {
public:
    /// Collects every gradient-carrying node reachable from `root`.
    static Tape record(const Tensor& root);

    std::size_t size() const { return nodes_.size(); }
    /// Operation names in execution order (leaves report "leaf").
    std::vector<std::string> ops() const;
    /// Propagates `root`'s gradient (seeded to 1) through the record in exact
    /// reverse order.
    void run_backward();

private:
    std::vector<detail::Node*> nodes_;
    std::vector<std::shared_ptr<detail::Node>> keep_alive_;
};

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

} // namespace mdiqa
