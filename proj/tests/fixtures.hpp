#pragma once

// Parameter and data fixtures shared by the tests and the acceptance runner.

#include <Eigen/Dense>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "mjghd/jghd.hpp"
#include "mjghd/model.hpp"
#include "oracles.hpp"

namespace fixture {

inline oracle::Bivariate random_bivariate(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    const double angle = in(0.0, 2.0 * std::numbers::pi);
    oracle::Bivariate b{};
    b.gamma << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    b.mu1 = in(-1.0, 1.0);
    b.mu2 = in(-1.0, 1.0);
    b.beta1 = in(-1.0, 1.0);
    b.beta2 = in(-1.0, 1.0);
    b.phi = in(0.3, 3.0);
    b.b = in(0.3, 3.0);
    b.omega = in(0.3, 5.0);
    b.lambda = in(-2.0, 2.0);
    b.omega0 = in(0.3, 5.0);
    b.lambda0 = in(-2.0, 2.0);
    return b;
}

inline mjghd::JghdParams to_params(const oracle::Bivariate& b) {
    mjghd::JghdParams p;
    p.gamma = b.gamma;
    p.mu = Eigen::Vector2d(b.mu1, b.mu2);
    p.beta = Eigen::Vector2d(b.beta1, b.beta2);
    p.phi = Eigen::VectorXd::Constant(1, b.phi);
    p.b = b.b;
    p.omega = Eigen::VectorXd::Constant(1, b.omega);
    p.lambda = Eigen::VectorXd::Constant(1, b.lambda);
    p.omega0 = b.omega0;
    p.lambda0 = b.lambda0;
    return p;
}

inline Eigen::MatrixXd random_orthogonal(Eigen::Index p, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = nd(rng);
    return Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
}

/// Random valid component with moderate scales, tails and skewness.
inline mjghd::JghdParams example_params(int p, int q, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.5, 2.0);
    mjghd::JghdParams prm;
    prm.gamma = random_orthogonal(p, rng);
    prm.mu = Eigen::VectorXd::NullaryExpr(p, [&]() { return nd(rng); });
    prm.beta = Eigen::VectorXd::NullaryExpr(p, [&]() { return 0.5 * nd(rng); });
    prm.phi = Eigen::VectorXd::NullaryExpr(q, [&]() { return u(rng); });
    prm.b = u(rng);
    prm.omega = Eigen::VectorXd::NullaryExpr(q, [&]() { return u(rng); });
    prm.lambda = Eigen::VectorXd::NullaryExpr(q, [&]() { return u(rng) - 1.25; });
    prm.omega0 = u(rng);
    prm.lambda0 = u(rng) - 1.25;
    return prm;
}

/// Mixture of JGHDs whose raw-space locations are spread along a random unit
/// direction, consecutive components `separation` apart.
inline mjghd::MjghdModel separated_model(int p, const std::vector<int>& q, double separation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd dir = Eigen::VectorXd::NullaryExpr(p, [&]() { return nd(rng); });
    dir.normalize();
    mjghd::MjghdModel model;
    const auto n_comp = static_cast<Eigen::Index>(q.size());
    model.weights = Eigen::VectorXd::Constant(n_comp, 1.0 / static_cast<double>(n_comp));
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const int qg = q[static_cast<std::size_t>(g)];
        mjghd::JghdParams c;
        c.gamma = random_orthogonal(p, rng);
        const Eigen::VectorXd centre = (static_cast<double>(g) * separation) * dir;
        c.beta = Eigen::VectorXd::Zero(p);
        for (int j = 0; j < qg; ++j) c.beta[j] = 0.5 * nd(rng);
        c.phi = Eigen::VectorXd::LinSpaced(qg, 2.0, 1.0);
        c.b = 0.3;
        c.omega = Eigen::VectorXd::Constant(qg, 2.0);
        c.lambda = Eigen::VectorXd::Constant(qg, 1.0);
        c.omega0 = 3.0;
        c.lambda0 = 1.0;
        // E[W] = K_2(2) / K_1(2); shifts mu so the component mean sits at `centre`.
        const double mean_w = std::exp(mjghd::special::log_bessel_k_ratio(2.0, 1.0, 2.0));
        c.mu = c.gamma.transpose() * centre - mean_w * c.beta;
        model.components.push_back(c);
    }
    return model;
}

}  // namespace fixture
