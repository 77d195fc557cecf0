#include "capi/kernel_regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace capi {

KernelDictionary::KernelDictionary(std::vector<double> centers, std::size_t dim, Eigen::VectorXd weights,
                                   double bandwidth)
    : centers_(std::move(centers)), dim_(dim), weights_(std::move(weights)), bandwidth_(bandwidth) {
    require(bandwidth_ > 0.0, "kernel bandwidth must be positive");
    require(dim_ > 0 && centers_.size() == static_cast<std::size_t>(weights_.size()) * dim_,
            "dictionary centers do not match the weights");
}

double KernelDictionary::predict(StateView x) const {
    require(x.size() == dim_, "query has wrong dimension");
    const double scale = -0.5 / bandwidth_;
    double total = 0.0;
    for (std::size_t j = 0; j < size(); ++j) {
        const double* c = centers_.data() + j * dim_;
        double d2 = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) {
            double diff = x[d] - c[d];
            d2 += diff * diff;
        }
        total += weights_[static_cast<Eigen::Index>(j)] * std::exp(scale * d2);
    }
    return total;
}

Eigen::MatrixXd gaussian_kernel_matrix(std::span<const double> a, std::span<const double> b, std::size_t dim,
                                       double bandwidth) {
    require(dim > 0 && a.size() % dim == 0 && b.size() % dim == 0, "point sets do not match dim");
    require(bandwidth > 0.0, "kernel bandwidth must be positive");
    const auto na = static_cast<Eigen::Index>(a.size() / dim);
    const auto nb = static_cast<Eigen::Index>(b.size() / dim);
    const double scale = -0.5 / bandwidth;
    Eigen::MatrixXd k(na, nb);
    for (Eigen::Index j = 0; j < nb; ++j) {
        const double* y = b.data() + static_cast<std::size_t>(j) * dim;
        for (Eigen::Index i = 0; i < na; ++i) {
            const double* x = a.data() + static_cast<std::size_t>(i) * dim;
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                double diff = x[d] - y[d];
                d2 += diff * diff;
            }
            k(i, j) = std::exp(scale * d2);
        }
    }
    return k;
}

KernelRidge::KernelRidge(std::vector<double> inputs, std::size_t dim, const KernelConfig& cfg, Rng& rng)
    : n_(dim == 0 ? 0 : inputs.size() / dim), dim_(dim), bandwidth_(cfg.bandwidth) {
    require(dim_ > 0 && n_ > 0 && inputs.size() == n_ * dim_, "kernel ridge needs a non-empty input set");
    require(cfg.bandwidth > 0.0, "kernel bandwidth must be positive");
    require(cfg.ridge_scale >= 0.0, "ridge scale must be non-negative");
    require(cfg.dictionary_cap >= 1, "dictionary cap must be positive");
    lambda_ = cfg.ridge_scale / static_cast<double>(n_);

    std::vector<std::size_t> picks(n_);
    std::iota(picks.begin(), picks.end(), 0);
    const std::size_t m = std::min(cfg.dictionary_cap, n_);
    if (m < n_) {
        for (std::size_t i = 0; i < m; ++i) std::swap(picks[i], picks[i + uniform_index(rng, n_ - i)]);
        picks.resize(m);
        std::sort(picks.begin(), picks.end());
    }
    centers_.reserve(m * dim_);
    for (auto i : picks) centers_.insert(centers_.end(), inputs.begin() + i * dim_, inputs.begin() + (i + 1) * dim_);

    design_ = gaussian_kernel_matrix(inputs, centers_, dim_, bandwidth_);
    Eigen::MatrixXd gram = gaussian_kernel_matrix(centers_, centers_, dim_, bandwidth_);
    Eigen::MatrixXd system = design_.transpose() * design_;
    system += (static_cast<double>(n_) * lambda_) * gram;
    // tiny jitter keeps the factorization stable for near-duplicate centers
    system.diagonal().array() += 1e-10 * std::max(1.0, system.diagonal().mean());
    factor_.compute(system);
}

Eigen::VectorXd KernelRidge::solve(std::span<const double> targets) const {
    require(targets.size() == n_, "target vector has wrong length");
    Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(n_));
    return factor_.solve(design_.transpose() * y);
}

KernelDictionary KernelRidge::fit(std::span<const double> targets) const {
    return KernelDictionary(centers_, dim_, solve(targets), bandwidth_);
}

}  // namespace capi
