#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cred {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Error hierarchy. Every failure surfaced by the library derives from Error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct NonFiniteError : Error {
    using Error::Error;
};
struct ValueError : Error {
    using Error::Error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;
    const char* op = "leaf";
};

}  // namespace detail

// Dense row-major float64 tensor. Copies share the underlying node, so a
// Tensor behaves like an immutable value once it has been produced by an op.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const;

    std::span<const double> data() const;
    double item() const;
    double operator[](std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;

    // Writable access for leaf tensors only (parameter updates, finite
    // difference perturbation).
    std::span<double> mutable_data();
    void set_requires_grad(bool on);
    void zero_grad();

    // Copy of the values with no recorded history.
    Tensor detach() const;

    // Reverse-mode pass from a scalar. Every reachable requires_grad leaf
    // ends up with grad = d(this)/d(leaf); previous grads are overwritten.
    void backward() const;

    bool is_leaf() const;
    const char* op_name() const;

    // Internal: used by op implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

  private:
    std::shared_ptr<detail::Node> node_;
};

// Disables graph recording in the current thread while alive.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

  private:
    bool previous_;
};

}  // namespace cred
