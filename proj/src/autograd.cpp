// SPDX-License-Identifier: Apache-2.0

#include "newsrec/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace newsrec::ag {

namespace {

thread_local bool t_grad_enabled = true;

void require(bool condition, const char* what) {
    if (!condition) {
        throw std::invalid_argument(what);
    }
}

// Builds a result node. Inputs and the backward closure are only kept when a
// graph is being recorded and at least one input needs a gradient.
Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool needs = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs) {
            needs = needs || in->requires_grad;
        }
    }
    if (needs) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Tensor(std::move(node));
}

const Matrix& Tensor::value() const {
    require(defined(), "undefined tensor");
    return node_->value;
}

Matrix& Tensor::mutable_value() {
    require(defined(), "undefined tensor");
    return node_->value;
}

const Matrix& Tensor::grad() const {
    require(defined(), "undefined tensor");
    return node_->grad;
}

Matrix& Tensor::mutable_grad() {
    require(defined(), "undefined tensor");
    return node_->grad;
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::zero_grad() {
    if (defined()) {
        node_->grad.resize(0, 0);
    }
}

double Tensor::item() const {
    require(rows() == 1 && cols() == 1, "item() needs a 1x1 tensor");
    return value()(0, 0);
}

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

void Tensor::backward() const {
    require(rows() == 1 && cols() == 1, "backward() needs a scalar tensor");
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && !visited.contains(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.size() != 0) {
            node->backward_fn(*node);
        }
    }
    // Interior gradients are not needed after the pass.
    for (Node* node : order) {
        if (node->backward_fn) {
            node->grad.resize(0, 0);
        }
    }
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---- arithmetic -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.value() * b.value(), {an, bn}, [an, bn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad * bn->value.transpose());
        if (bn->requires_grad) bn->accumulate(an->value.transpose() * out.grad);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.value() * b.value().transpose(), {an, bn}, [an, bn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad * bn->value);
        if (bn->requires_grad) bn->accumulate(out.grad.transpose() * an->value);
    });
}

Tensor transpose(const Tensor& a) {
    auto an = a.node();
    return make_result(a.value().transpose(), {an},
                       [an](Node& out) { an->accumulate(out.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.value() + b.value(), {an, bn}, [an, bn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad);
        if (bn->requires_grad) bn->accumulate(out.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.value() - b.value(), {an, bn}, [an, bn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad);
        if (bn->requires_grad) bn->accumulate(-out.grad);
    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.value().cwiseProduct(b.value()), {an, bn}, [an, bn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad.cwiseProduct(bn->value));
        if (bn->requires_grad) bn->accumulate(out.grad.cwiseProduct(an->value));
    });
}

Tensor scale(const Tensor& a, double s) {
    auto an = a.node();
    return make_result(a.value() * s, {an}, [an, s](Node& out) { an->accumulate(out.grad * s); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
    auto an = a.node();
    auto rn = row.node();
    Matrix value = a.value().rowwise() + row.value().row(0);
    return make_result(std::move(value), {an, rn}, [an, rn](Node& out) {
        if (an->requires_grad) an->accumulate(out.grad);
        if (rn->requires_grad) rn->accumulate(out.grad.colwise().sum());
    });
}

Tensor sum_all(const Tensor& a) {
    auto an = a.node();
    Matrix value(1, 1);
    value(0, 0) = a.value().sum();
    return make_result(std::move(value), {an}, [an](Node& out) {
        an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), out.grad(0, 0)));
    });
}

Tensor mean_of(std::span<const Tensor> scalars) {
    require(!scalars.empty(), "mean_of: empty input");
    std::vector<std::shared_ptr<Node>> inputs;
    double total = 0.0;
    for (const auto& s : scalars) {
        require(s.rows() == 1 && s.cols() == 1, "mean_of: inputs must be 1x1");
        total += s.value()(0, 0);
        inputs.push_back(s.node());
    }
    const double n = static_cast<double>(scalars.size());
    Matrix value(1, 1);
    value(0, 0) = total / n;
    auto captured = inputs;
    return make_result(std::move(value), std::move(inputs), [captured, n](Node& out) {
        Matrix g = out.grad / n;
        for (const auto& in : captured) {
            if (in->requires_grad) in->accumulate(g);
        }
    });
}

// ---- nonlinearities ---------------------------------------------------------

Tensor tanh(const Tensor& a) {
    auto an = a.node();
    Matrix y = a.value().array().tanh().matrix();
    auto result = make_result(y, {an}, nullptr);
    if (result.requires_grad()) {
        result.node()->backward_fn = [an](Node& out) {
            an->accumulate((out.grad.array() * (1.0 - out.value.array().square())).matrix());
        };
    }
    return result;
}

Tensor relu(const Tensor& a) {
    auto an = a.node();
    return make_result(a.value().cwiseMax(0.0), {an}, [an](Node& out) {
        an->accumulate((out.grad.array() * (an->value.array() > 0.0).cast<double>()).matrix());
    });
}

Tensor gelu(const Tensor& a) {
    auto an = a.node();
    Matrix y = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); });
    return make_result(std::move(y), {an}, [an](Node& out) {
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix dy = an->value.unaryExpr([inv_sqrt_2pi](double x) {
            return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
        an->accumulate(out.grad.cwiseProduct(dy));
    });
}

Tensor softmax_rows(const Tensor& a, std::span<const int> column_mask) {
    const Matrix& x = a.value();
    const bool masked = !column_mask.empty();
    if (masked) {
        require(static_cast<Index>(column_mask.size()) == x.cols(), "softmax_rows: mask length mismatch");
        bool any = false;
        for (int m : column_mask) any = any || m != 0;
        if (!any) {
            throw std::invalid_argument("softmax_rows: every position is masked");
        }
    }
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index c = 0; c < x.cols(); ++c) {
            if (!masked || column_mask[c] != 0) mx = std::max(mx, x(r, c));
        }
        double total = 0.0;
        for (Index c = 0; c < x.cols(); ++c) {
            if (!masked || column_mask[c] != 0) {
                y(r, c) = std::exp(x(r, c) - mx);
                total += y(r, c);
            }
        }
        y.row(r) /= total;
    }
    auto an = a.node();
    auto result = make_result(std::move(y), {an}, nullptr);
    if (result.requires_grad()) {
        result.node()->backward_fn = [an](Node& out) {
            const Matrix& p = out.value;
            Eigen::VectorXd dots = (out.grad.cwiseProduct(p)).rowwise().sum();
            Matrix g = p.cwiseProduct(out.grad.colwise() - dots);
            an->accumulate(g);
        };
    }
    return result;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
    const Matrix& x = a.value();
    require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: gamma shape");
    require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: beta shape");
    const Index n = x.cols();
    Eigen::VectorXd mean = x.rowwise().mean();
    Matrix centered = x.colwise() - mean;
    Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt();
    Matrix xhat = centered.array().colwise() * inv_std.array();
    Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();

    auto an = a.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_result(std::move(y), {an, gn, bn}, [an, gn, bn, xhat, inv_std, n](Node& out) {
        const Matrix& g = out.grad;
        if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bn->requires_grad) bn->accumulate(g.colwise().sum());
        if (an->requires_grad) {
            Matrix dxhat = g.array().rowwise() * gn->value.row(0).array();
            Eigen::VectorXd mean_d = dxhat.rowwise().mean();
            Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(n);
            Matrix dx = (dxhat.colwise() - mean_d) - (xhat.array().colwise() * mean_dx.array()).matrix();
            dx = dx.array().colwise() * inv_std.array();
            an->accumulate(dx);
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& scores, Index label) {
    require(scores.rows() == 1, "softmax_cross_entropy: scores must be a row");
    if (label < 0 || label >= scores.cols()) {
        throw std::out_of_range("softmax_cross_entropy: label index out of range");
    }
    const RowVector s = scores.value().row(0);
    const double mx = s.maxCoeff();
    RowVector e = (s.array() - mx).exp().matrix();
    const double total = e.sum();
    Matrix value(1, 1);
    value(0, 0) = std::log(total) + mx - s(label);
    RowVector p = e / total;
    auto sn = scores.node();
    return make_result(std::move(value), {sn}, [sn, p, label](Node& out) {
        Matrix g = p;
        g(0, label) -= 1.0;
        sn->accumulate(g * out.grad(0, 0));
    });
}

// ---- shape ------------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const Index> rows) {
    const Matrix& t = table.value();
    Matrix y(static_cast<Index>(rows.size()), t.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= t.rows()) {
            throw std::out_of_range("gather_rows: row index out of range");
        }
        y.row(static_cast<Index>(i)) = t.row(rows[i]);
    }
    auto tn = table.node();
    std::vector<Index> idx(rows.begin(), rows.end());
    return make_result(std::move(y), {tn}, [tn, idx = std::move(idx)](Node& out) {
        Matrix g = Matrix::Zero(tn->value.rows(), tn->value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            g.row(idx[i]) += out.grad.row(static_cast<Index>(i));
        }
        tn->accumulate(g);
    });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
    auto an = a.node();
    Matrix y = a.value().middleCols(start, count);
    return make_result(std::move(y), {an}, [an, start, count](Node& out) {
        Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
        g.middleCols(start, count) = out.grad;
        an->accumulate(g);
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat_cols: empty input");
    const Index rows = parts.front().rows();
    Index cols = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    for (const auto& p : parts) {
        require(p.rows() == rows, "concat_cols: row mismatch");
        cols += p.cols();
        inputs.push_back(p.node());
    }
    Matrix y(rows, cols);
    Index offset = 0;
    for (const auto& p : parts) {
        y.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
    }
    auto captured = inputs;
    return make_result(std::move(y), std::move(inputs), [captured](Node& out) {
        Index off = 0;
        for (const auto& in : captured) {
            const Index c = in->value.cols();
            if (in->requires_grad) in->accumulate(out.grad.middleCols(off, c));
            off += c;
        }
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat_rows: empty input");
    const Index cols = parts.front().cols();
    Index rows = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    for (const auto& p : parts) {
        require(p.cols() == cols, "concat_rows: column mismatch");
        rows += p.rows();
        inputs.push_back(p.node());
    }
    Matrix y(rows, cols);
    Index offset = 0;
    for (const auto& p : parts) {
        y.middleRows(offset, p.rows()) = p.value();
        offset += p.rows();
    }
    auto captured = inputs;
    return make_result(std::move(y), std::move(inputs), [captured](Node& out) {
        Index off = 0;
        for (const auto& in : captured) {
            const Index r = in->value.rows();
            if (in->requires_grad) in->accumulate(out.grad.middleRows(off, r));
            off += r;
        }
    });
}

double global_grad_norm(const ParameterList& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (p.tensor.grad().size() != 0) {
            sq += p.tensor.grad().squaredNorm();
        }
    }
    return std::sqrt(sq);
}

}  // namespace newsrec::ag
