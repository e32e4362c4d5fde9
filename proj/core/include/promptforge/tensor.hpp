#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto an immutable value node. Operations build
// new nodes that remember their parents; backward() replays the chain rule
// over the recorded graph in reverse topological order. Only gradient stores
// are ever mutated after construction.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace promptforge {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into its parents' grads. Empty for leaves.
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    bool is_leaf() const { return !backward; }
};

}  // namespace detail

class Tensor {
public:
    Tensor();

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }
    const char* op_name() const { return node_->op; }

    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    /// Clears the gradient store; required before each optimizer step since
    /// gradients accumulate across backward calls.
    void zero_grad();

    /// Value copy that is disconnected from the graph and never needs grad.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Used by operation implementations.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> parents, const char* op,
                              std::function<void(detail::Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Ordered record of the operations reachable from a root. Every node
/// appears after all of its parents; only nodes that need gradients are kept.
class Graph {
public:
    explicit Graph(const Tensor& root);

    const std::vector<detail::Node*>& order() const { return order_; }
    std::size_t size() const { return order_.size(); }

    /// Seeds d(root)/d(root) = 1 and propagates to every leaf. Leaf
    /// gradients accumulate; interior gradients are reset first.
    void backward();

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> order_;
};

/// Backpropagates from a scalar loss. Throws RankError for non-scalars.
void backward(const Tensor& loss);

// ---- arithmetic --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n x in] * w[out x in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// linear without a bias term
Tensor linear(const Tensor& x, const Tensor& weight);

/// Element-wise sum; b may also be a row vector [c] broadcast over a[r x c].
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
/// tanh approximation of the Gaussian error linear unit
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log with inputs floored at kLogFloor.
Tensor log(const Tensor& a);

inline constexpr double kLogFloor = 1e-30;
inline constexpr double kNormEpsilon = 1e-12;

Tensor sum(const Tensor& a);
/// [r x c] -> [c]
Tensor mean_rows(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Stacks matrices with equal column counts (rank-1 inputs count as one row).
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
/// Row i of a matrix as a rank-1 tensor.
Tensor row(const Tensor& a, std::size_t i);
/// Single element of a rank-1 tensor as a scalar.
Tensor element(const Tensor& a, std::size_t i);
/// [c] -> [n x c]
Tensor repeat_rows(const Tensor& v, std::size_t n);

/// Row-wise softmax with max subtraction. Rank-1 input is one row.
Tensor softmax_rows(const Tensor& a);
/// Per-row standardisation (x - mean) / sqrt(var + eps), no affine part.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);

/// Cosine similarity of two equal-length vectors; throws
/// DegenerateVectorError when either norm is below kNormEpsilon.
Tensor cosine(const Tensor& a, const Tensor& b);
/// Cosine of v[d] with every row of m[r x d], giving [r].
Tensor row_cosines(const Tensor& v, const Tensor& m);

}  // namespace promptforge
