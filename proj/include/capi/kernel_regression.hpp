#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "capi/common.hpp"
#include "capi/random.hpp"

namespace capi {

struct KernelConfig {
    /// sigma^2 of k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
    double bandwidth = 1e-2;
    /// lambda = ridge_scale / n for a regression on n points.
    double ridge_scale = 0.01;
    std::size_t dictionary_cap = 800;
};

/// f(x) = sum_j weight_j k(x, center_j), inputs already scaled.
class KernelDictionary {
public:
    KernelDictionary(std::vector<double> centers, std::size_t dim, Eigen::VectorXd weights, double bandwidth);

    double predict(StateView x) const;
    std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
    std::size_t dim() const { return dim_; }
    const std::vector<double>& centers() const { return centers_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    double bandwidth() const { return bandwidth_; }

private:
    std::vector<double> centers_;
    std::size_t dim_;
    Eigen::VectorXd weights_;
    double bandwidth_;
};

/// k(a_i, b_j) for row-major point sets.
Eigen::MatrixXd gaussian_kernel_matrix(std::span<const double> a, std::span<const double> b, std::size_t dim,
                                       double bandwidth);

/// Kernel ridge regression on a fixed input set with a subsampled
/// dictionary. Minimizes (1/n) sum_i (y_i - f(x_i))^2 + lambda |f|^2 over
/// the span of the dictionary; the factorization is reused for every
/// target vector.
class KernelRidge {
public:
    KernelRidge(std::vector<double> inputs, std::size_t dim, const KernelConfig& cfg, Rng& rng);

    KernelDictionary fit(std::span<const double> targets) const;
    /// Coefficients only; pairs with centers().
    Eigen::VectorXd solve(std::span<const double> targets) const;

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }
    const std::vector<double>& centers() const { return centers_; }
    double lambda() const { return lambda_; }
    double bandwidth() const { return bandwidth_; }

private:
    std::size_t n_;
    std::size_t dim_;
    double bandwidth_;
    double lambda_;
    std::vector<double> centers_;
    Eigen::MatrixXd design_;  // n x m
    Eigen::LDLT<Eigen::MatrixXd> factor_;
};

}  // namespace capi
