// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value is a 2-D Eigen matrix; row vectors (1 x n) stand in for 1-D
// tensors. A Tensor is a cheap handle to a graph node. Nodes created while
// gradient recording is enabled keep their inputs alive until the result is
// dropped, so releasing the loss frees the whole graph while parameters (leaf
// nodes) and their accumulated gradients survive.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace newsrec::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct Node;

class Tensor {
public:
    Tensor() = default;

    /// Leaf that never receives a gradient.
    static Tensor constant(Matrix value);
    /// Leaf that accumulates gradients across backward passes.
    static Tensor parameter(Matrix value);

    bool defined() const noexcept { return node_ != nullptr; }
    const Matrix& value() const;
    Matrix& mutable_value();
    /// Accumulated gradient; zero-sized until the first backward pass touches it.
    const Matrix& grad() const;
    Matrix& mutable_grad();
    bool requires_grad() const;
    void zero_grad();

    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    /// Value of a 1x1 tensor.
    double item() const;

    /// Back-propagates from this scalar (1x1) tensor.
    void backward() const;

    const std::shared_ptr<Node>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

/// Whether new operations record a graph on the current thread.
bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- arithmetic -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T; the layout used by (out x in) linear weights.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Adds a (1 x c) row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sum_all(const Tensor& a);
/// Mean of a list of 1x1 tensors.
Tensor mean_of(std::span<const Tensor> scalars);

// ---- nonlinearities ---------------------------------------------------------

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf) GELU as used by BERT-family encoders.
Tensor gelu(const Tensor& a);

/// Row-wise softmax. When column_mask is non-empty, columns with a zero entry
/// get probability 0 in every row; at least one column must be valid.
Tensor softmax_rows(const Tensor& a, std::span<const int> column_mask = {});

/// Row-wise layer normalisation with (1 x c) affine parameters.
Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps);

/// Cross-entropy of softmax(scores) against label; scores is (1 x n).
Tensor softmax_cross_entropy(const Tensor& scores, Index label);

// ---- shape ------------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const Index> rows);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// ---- helpers ----------------------------------------------------------------

struct NamedParameter {
    std::string name;
    Tensor tensor;
    /// Serialised as a 1-D tensor of length cols() rather than a 1 x n matrix.
    bool is_vector = false;
};

using ParameterList = std::vector<NamedParameter>;

double global_grad_norm(const ParameterList& params);

}  // namespace newsrec::ag
