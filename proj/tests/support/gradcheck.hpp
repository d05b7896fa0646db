// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of reverse-mode gradients.
#pragma once

#include "newsrec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace newsrec::testing {

inline ag::Matrix random_matrix(ag::Index rows, ag::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    ag::Matrix m(rows, cols);
    for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
};

/// f maps parameter tensors to any tensor; the scalar checked is
/// sum(f(x) .* W) for a fixed random W, so every output entry gets a
/// distinct upstream gradient.
inline GradCheckResult gradcheck(const std::function<ag::Tensor(const std::vector<ag::Tensor>&)>& f,
                                 const std::vector<ag::Matrix>& inputs, std::uint64_t seed = 1, double h = 1e-6) {
    std::mt19937_64 rng(seed);
    std::vector<ag::Tensor> params;
    for (const auto& m : inputs) params.push_back(ag::Tensor::parameter(m));
    const ag::Tensor probe = f(params);
    const ag::Tensor weights = ag::Tensor::constant(random_matrix(probe.rows(), probe.cols(), rng));
    auto objective = [&](const std::vector<ag::Tensor>& p) { return ag::sum_all(ag::hadamard(f(p), weights)); };

    objective(params).backward();
    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const ag::Matrix analytic = params[k].grad().size() ? params[k].grad() : ag::Matrix::Zero(inputs[k].rows(), inputs[k].cols());
        for (ag::Index i = 0; i < inputs[k].size(); ++i) {
            ag::NoGradGuard no_grad;
            auto eval = [&](double delta) {
                std::vector<ag::Tensor> shifted;
                for (std::size_t j = 0; j < inputs.size(); ++j) {
                    ag::Matrix m = inputs[j];
                    if (j == k) m.data()[i] += delta;
                    shifted.push_back(ag::Tensor::constant(std::move(m)));
                }
                return objective(shifted).item();
            };
            const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
            const double a = analytic.data()[i];
            const double abs_err = std::abs(a - numeric);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
            result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
        }
    }
    return result;
}

}  // namespace newsrec::testing
