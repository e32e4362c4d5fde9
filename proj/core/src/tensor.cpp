#include "promptforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "promptforge/errors.hpp"

namespace promptforge {

using detail::Node;

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw RankError(std::string(op) + ": expected rank " + std::to_string(rank) +
                        ", got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

// Matrix view of a rank-1 or rank-2 tensor: rank-1 is a single row.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& t, const char* op) {
    if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
    if (t.rank() == 1) return {1, t.shape()[0]};
    throw RankError(std::string(op) + ": expected a vector or matrix, got " +
                    shape_string(t.shape()));
}

std::vector<double>& grad_of(Node& self, std::size_t parent) {
    return self.parents[parent]->grad;
}

bool wants_grad(const Node& self, std::size_t parent) {
    return self.parents[parent]->requires_grad;
}

template <typename Fn>
Tensor unary(const Tensor& a, const char* op, Fn&& f,
             std::function<double(double x, double y)> dfdx) {
    std::vector<double> out(a.size());
    const auto& in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a}, op,
                               [dfdx = std::move(dfdx)](Node& self) {
                                   auto& g = grad_of(self, 0);
                                   const auto& x = self.parents[0]->value;
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       g[i] += self.grad[i] * dfdx(x[i], self.value[i]);
                                   }
                               });
}

}  // namespace

// ---- Tensor ------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) {
    node_->shape = {};
    node_->value = {0.0};
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
    }
    if (shape_size(shape) != values.size()) {
        throw DimensionError("shape " + shape_string(shape) + " needs " +
                             std::to_string(shape_size(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
    return from({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
    std::vector<double> flat;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("ragged matrix literal");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(flat), requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           const char* op, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = op;
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& p) { return p.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        node->grad.assign(node->value.size(), 0.0);
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw RankError("rows() on " + shape_string(shape()));
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw RankError("cols() on " + shape_string(shape()));
    return shape()[1];
}

double Tensor::item() const {
    if (size() != 1) throw RankError("item() on " + shape_string(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t i) const {
    if (i >= size()) throw IndexError("index " + std::to_string(i) + " out of range");
    return node_->value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    if (rank() != 2 || r >= shape()[0] || c >= shape()[1]) {
        throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for " + shape_string(shape()));
    }
    return node_->value[r * shape()[1] + c];
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    return from(shape(), node_->value, false);
}

// ---- Graph -------------------------------------------------------------

Graph::Graph(const Tensor& root) : root_(root.node()) {
    if (!root_->requires_grad) return;
    // Iterative post-order DFS; parents are emitted before children.
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    seen.insert(root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

void Graph::backward() {
    if (order_.empty()) return;
    for (Node* n : order_) {
        if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    root_->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) n->backward(*n);
    }
}

void backward(const Tensor& loss) {
    if (loss.size() != 1 || loss.rank() > 1) {
        throw RankError("backward needs a scalar loss, got " + shape_string(loss.shape()));
    }
    Graph(loss).backward();
}

// ---- products ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()));
    }
    std::vector<double> out(r * c, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            const double* brow = &bv[p * c];
            double* orow = &out[i * c];
            for (std::size_t j = 0; j < c; ++j) orow[j] += s * brow[j];
        }
    }
    return Tensor::make_result({r, c}, std::move(out), {a, b}, "matmul",
                               [r, k, c](Node& self) {
        const auto& g = self.grad;
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (wants_grad(self, 0)) {
            auto& ga = grad_of(self, 0);  // g * b^T
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * bv[p * c + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (wants_grad(self, 1)) {
            auto& gb = grad_of(self, 1);  // a^T * g
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = av[i * k + p];
                    for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += s * g[i * c + j];
                }
            }
        }
    });
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear");
    const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
    if (w.shape()[1] != in) {
        throw DimensionError("linear: input " + shape_string(x.shape()) +
                             " does not match weight " + shape_string(w.shape()));
    }
    if (bias && bias->shape() != Shape{out_dim}) {
        throw DimensionError("linear: bias " + shape_string(bias->shape()) +
                             " does not match weight " + shape_string(w.shape()));
    }
    std::vector<double> out(n * out_dim);
    const auto& xv = x.values();
    const auto& wv = w.values();
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = &xv[i * in];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wr = &wv[o * in];
            double acc = bias ? bias->values()[o] : 0.0;
            for (std::size_t p = 0; p < in; ++p) acc += xr[p] * wr[p];
            out[i * out_dim + o] = acc;
        }
    }
    std::vector<Tensor> parents{x, w};
    if (bias) parents.push_back(*bias);
    return Tensor::make_result({n, out_dim}, std::move(out), std::move(parents), "linear",
                               [n, in, out_dim](Node& self) {
        const auto& g = self.grad;
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        if (wants_grad(self, 0)) {
            auto& gx = grad_of(self, 0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double s = g[i * out_dim + o];
                    const double* wr = &wv[o * in];
                    double* gr = &gx[i * in];
                    for (std::size_t p = 0; p < in; ++p) gr[p] += s * wr[p];
                }
            }
        }
        if (wants_grad(self, 1)) {
            auto& gw = grad_of(self, 1);
            for (std::size_t i = 0; i < n; ++i) {
                const double* xr = &xv[i * in];
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double s = g[i * out_dim + o];
                    double* gr = &gw[o * in];
                    for (std::size_t p = 0; p < in; ++p) gr[p] += s * xr[p];
                }
            }
        }
        if (self.parents.size() == 3 && wants_grad(self, 2)) {
            auto& gb = grad_of(self, 2);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[i * out_dim + o];
            }
        }
    });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return linear_impl(x, weight, &bias);
}

Tensor linear(const Tensor& x, const Tensor& weight) {
    return linear_impl(x, weight, nullptr);
}

// ---- element-wise ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
        return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
            for (std::size_t p = 0; p < 2; ++p) {
                if (!wants_grad(self, p)) continue;
                auto& g = grad_of(self, p);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        });
    }
    if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1]) {
        const std::size_t r = a.shape()[0], c = a.shape()[1];
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] + b.values()[j];
        }
        return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add_row",
                                   [r, c](Node& self) {
            if (wants_grad(self, 0)) {
                auto& g = grad_of(self, 0);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (wants_grad(self, 1)) {
                auto& g = grad_of(self, 1);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                }
            }
        });
    }
    throw DimensionError("add: cannot combine " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "subtract", [](Node& self) {
        if (wants_grad(self, 0)) {
            auto& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
            auto& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, "scale", [factor](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "hadamard", [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (wants_grad(self, 0)) {
            auto& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (wants_grad(self, 1)) {
            auto& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
    return unary(
        a, "gelu",
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
        [](double x, double) {
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, "log", [](double x) { return std::log(std::max(x, kLogFloor)); },
                 [](double x, double) { return x > kLogFloor ? 1.0 / x : 0.0; });
}

// ---- reductions and reshaping -------------------------------------------

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return Tensor::make_result({}, {total}, {a}, "sum", [](Node& self) {
        auto& g = grad_of(self, 0);
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean_rows(const Tensor& a) {
    require_rank(a, 2, "mean_rows");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += a.values()[i * c + j];
    }
    for (auto& v : out) v /= static_cast<double>(r);
    return Tensor::make_result({c}, std::move(out), {a}, "mean_rows", [r, c](Node& self) {
        auto& g = grad_of(self, 0);
        const double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
    }
    return Tensor::make_result({c, r}, std::move(out), {a}, "transpose", [r, c](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw DimensionError("reshape: " + shape_string(a.shape()) + " into " + shape_string(shape));
    }
    return Tensor::make_result(std::move(shape), a.values(), {a}, "reshape", [](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t c = as_matrix(parts[0], "concat_rows").second;
    std::size_t total_rows = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
        auto [pr, pc] = as_matrix(p, "concat_rows");
        if (pc != c) {
            throw DimensionError("concat_rows: column mismatch " + shape_string(parts[0].shape()) +
                                 " vs " + shape_string(p.shape()));
        }
        total_rows += pr;
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return Tensor::make_result({total_rows, c}, std::move(out), parts, "concat_rows",
                               [](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            const std::size_t n = self.parents[p]->value.size();
            if (wants_grad(self, p)) {
                auto& g = grad_of(self, p);
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
            }
            offset += n;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    for (const auto& p : parts) require_rank(p, 2, "concat_cols");
    const std::size_t r = parts[0].shape()[0];
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape()[0] != r) {
            throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                                 " vs " + shape_string(p.shape()));
        }
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
    }
    std::vector<double> out(r * total);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const std::size_t w = widths[p];
        for (std::size_t i = 0; i < r; ++i) {
            std::copy_n(&parts[p].values()[i * w], w, &out[i * total + offset]);
        }
        offset += w;
    }
    return Tensor::make_result({r, total}, std::move(out), parts, "concat_cols",
                               [r, total, widths](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            const std::size_t w = widths[p];
            if (wants_grad(self, p)) {
                auto& g = grad_of(self, p);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + offset + j];
                }
            }
            offset += w;
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
    require_rank(a, 2, "slice_cols");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (count == 0 || start + count > c) {
        throw IndexError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_string(a.shape()));
    }
    std::vector<double> out(r * count);
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(&a.values()[i * c + start], count, &out[i * count]);
    }
    return Tensor::make_result({r, count}, std::move(out), {a}, "slice_cols",
                               [r, c, start, count](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < count; ++j) g[i * c + start + j] += self.grad[i * count + j];
        }
    });
}

Tensor row(const Tensor& a, std::size_t i) {
    require_rank(a, 2, "row");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (i >= r) {
        throw IndexError("row " + std::to_string(i) + " out of range for " + shape_string(a.shape()));
    }
    std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(i * c),
                            a.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    return Tensor::make_result({c}, std::move(out), {a}, "row", [i, c](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
    });
}

Tensor element(const Tensor& a, std::size_t i) {
    require_rank(a, 1, "element");
    if (i >= a.size()) {
        throw IndexError("element " + std::to_string(i) + " out of range for " +
                         shape_string(a.shape()));
    }
    return Tensor::make_result({}, {a.values()[i]}, {a}, "element", [i](Node& self) {
        grad_of(self, 0)[i] += self.grad[0];
    });
}

Tensor repeat_rows(const Tensor& v, std::size_t n) {
    require_rank(v, 1, "repeat_rows");
    if (n == 0) throw DimensionError("repeat_rows: zero repetitions");
    const std::size_t c = v.size();
    std::vector<double> out;
    out.reserve(n * c);
    for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), v.values().begin(), v.values().end());
    return Tensor::make_result({n, c}, std::move(out), {v}, "repeat_rows", [n, c](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
    });
}

// ---- normalisers -------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
    auto [r, c] = as_matrix(a, "softmax_rows");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = &a.values()[i * c];
        double* o = &out[i * c];
        const double m = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = std::exp(in[j] - m);
            z += o[j];
        }
        for (std::size_t j = 0; j < c; ++j) o[j] /= z;
    }
    return Tensor::make_result(a.shape(), std::move(out), {a}, "softmax_rows",
                               [r = r, c = c](Node& self) {
        auto& g = grad_of(self, 0);
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = &self.value[i * c];
            const double* gy = &self.grad[i * c];
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
    auto [r, c] = as_matrix(a, "layer_norm_rows");
    std::vector<double> out(a.size());
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = &a.values()[i * c];
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += in[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (in[j] - mean) * inv_std[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), {a}, "layer_norm_rows",
                               [r = r, c = c, inv_std = std::move(inv_std)](Node& self) {
        auto& g = grad_of(self, 0);
        const double n = static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = &self.value[i * c];
            const double* gy = &self.grad[i * c];
            double mean_g = 0.0, mean_gy = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                mean_g += gy[j];
                mean_gy += gy[j] * y[j];
            }
            mean_g /= n;
            mean_gy /= n;
            for (std::size_t j = 0; j < c; ++j) {
                g[i * c + j] += inv_std[i] * (gy[j] - mean_g - y[j] * mean_gy);
            }
        }
    });
}

Tensor cosine(const Tensor& a, const Tensor& b) {
    require_rank(a, 1, "cosine");
    require_same_shape(a, b, "cosine");
    const auto& av = a.values();
    const auto& bv = b.values();
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        dot += av[i] * bv[i];
        na += av[i] * av[i];
        nb += bv[i] * bv[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kNormEpsilon || nb < kNormEpsilon) {
        throw DegenerateVectorError("cosine: vector norm below " + std::to_string(kNormEpsilon));
    }
    const double value = std::clamp(dot / (na * nb), -1.0, 1.0);
    return Tensor::make_result({}, {value}, {a, b}, "cosine", [na, nb](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const double cs = self.value[0];
        const double g = self.grad[0];
        // d cos / da = b / (|a||b|) - cos * a / |a|^2
        if (wants_grad(self, 0)) {
            auto& ga = grad_of(self, 0);
            for (std::size_t i = 0; i < av.size(); ++i) {
                ga[i] += g * (bv[i] / (na * nb) - cs * av[i] / (na * na));
            }
        }
        if (wants_grad(self, 1)) {
            auto& gb = grad_of(self, 1);
            for (std::size_t i = 0; i < bv.size(); ++i) {
                gb[i] += g * (av[i] / (na * nb) - cs * bv[i] / (nb * nb));
            }
        }
    });
}

Tensor row_cosines(const Tensor& v, const Tensor& m) {
    require_rank(v, 1, "row_cosines");
    require_rank(m, 2, "row_cosines");
    const std::size_t rows = m.shape()[0], d = m.shape()[1];
    if (v.size() != d) {
        throw DimensionError("row_cosines: " + shape_string(v.shape()) + " against " +
                             shape_string(m.shape()));
    }
    const auto& vv = v.values();
    const auto& mv = m.values();
    double nv = 0.0;
    for (double x : vv) nv += x * x;
    nv = std::sqrt(nv);
    std::vector<double> norms(rows, 0.0), out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0, nm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += vv[j] * mv[i * d + j];
            nm += mv[i * d + j] * mv[i * d + j];
        }
        norms[i] = std::sqrt(nm);
        if (nv < kNormEpsilon || norms[i] < kNormEpsilon) {
            throw DegenerateVectorError("row_cosines: vector norm below " + std::to_string(kNormEpsilon));
        }
        out[i] = std::clamp(dot / (nv * norms[i]), -1.0, 1.0);
    }
    return Tensor::make_result({rows}, std::move(out), {v, m}, "row_cosines",
                               [nv, norms = std::move(norms), rows, d](Node& self) {
        const auto& vv = self.parents[0]->value;
        const auto& mv = self.parents[1]->value;
        const bool want_v = wants_grad(self, 0);
        const bool want_m = wants_grad(self, 1);
        for (std::size_t i = 0; i < rows; ++i) {
            const double g = self.grad[i];
            if (g == 0.0) continue;
            const double cs = self.value[i];
            const double inv = 1.0 / (nv * norms[i]);
            if (want_v) {
                auto& gv = grad_of(self, 0);
                for (std::size_t j = 0; j < d; ++j) {
                    gv[j] += g * (mv[i * d + j] * inv - cs * vv[j] / (nv * nv));
                }
            }
            if (want_m) {
                auto& gm = grad_of(self, 1);
                const double nm2 = norms[i] * norms[i];
                for (std::size_t j = 0; j < d; ++j) {
                    gm[i * d + j] += g * (vv[j] * inv - cs * mv[i * d + j] / nm2);
                }
            }
        }
    });
}

}  // namespace promptforge
