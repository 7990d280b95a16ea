#pragma once

// Joint generalized hyperbolic density (JGHD) for one mixture component.
//
// With y = Gamma^T x, the first q rotated coordinates are independent
// univariate GH variables, each with its own GIG weight W_j, scale phi_j,
// concentration Omega_j and index lambda_j. The trailing p - q coordinates
// share one GIG weight A, the noise variance b, and (omega0, lambda0).
// Location and skewness are stored in the rotated frame.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>

#include "mjghd/errors.hpp"
#include "mjghd/gig.hpp"
#include "mjghd/special_functions.hpp"

namespace mjghd {

struct JghdParams {
    Eigen::MatrixXd gamma;   // p x p orthogonal; column j is the j-th rotated axis
    Eigen::VectorXd mu;      // p, rotated frame
    Eigen::VectorXd beta;    // p, rotated frame
    Eigen::VectorXd phi;     // q, subspace scales
    double b = 1.0;          // noise variance of the trailing p - q axes
    Eigen::VectorXd omega;   // q
    Eigen::VectorXd lambda;  // q
    double omega0 = 1.0;
    double lambda0 = -0.5;

    [[nodiscard]] Eigen::Index dim() const { return mu.size(); }
    [[nodiscard]] Eigen::Index q() const { return phi.size(); }

    /// Location in the original coordinates, Gamma mu.
    [[nodiscard]] Eigen::VectorXd location() const { return gamma * mu; }

    [[nodiscard]] double orthogonality_error() const {
        const auto p = gamma.cols();
        return (gamma.transpose() * gamma - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
    }

    void validate() const {
        const auto p = dim();
        const auto nq = q();
        auto fail = [](const std::string& what) { throw ParameterError("JghdParams: " + what); };
        if (p < 2) fail("dimension must be at least 2");
        if (nq < 1 || nq >= p) fail("subspace dimension must satisfy 0 < q < p");
        if (gamma.rows() != p || gamma.cols() != p) fail("gamma must be p x p");
        if (beta.size() != p) fail("beta must have length p");
        if (omega.size() != nq || lambda.size() != nq) fail("omega and lambda must have length q");
        if (!gamma.allFinite() || !mu.allFinite() || !beta.allFinite() || !lambda.allFinite() ||
            !std::isfinite(lambda0)) {
            fail("non-finite entries");
        }
        if (!((phi.array() > 0.0).all() && (omega.array() > 0.0).all() && b > 0.0 && omega0 > 0.0) ||
            !phi.allFinite() || !omega.allFinite() || !std::isfinite(b) || !std::isfinite(omega0)) {
            fail("phi, b, omega, omega0 must be positive and finite");
        }
        if (orthogonality_error() > 1e-8) fail("gamma is not orthogonal");
    }
};

/// Bessel argument with the degenerate-argument guard applied.
inline double guarded_bessel_argument(double d, double e, bool* clamped = nullptr) {
    double s = std::sqrt(d * e);
    if (s < kMinBesselArgument) {
        s = kMinBesselArgument;
        if (clamped != nullptr) *clamped = true;
    }
    return s;
}

/// Posterior law of W_j given the rotated observation y (0-based j < q).
inline GigParams posterior_w_params_rotated(const JghdParams& params, const Eigen::Ref<const Eigen::VectorXd>& y,
                                            Eigen::Index j) {
    if (j < 0 || j >= params.q()) {
        throw ParameterError("posterior_w_params: index outside the subspace");
    }
    const double dev = y[j] - params.mu[j];
    return {params.omega[j] + params.beta[j] * params.beta[j] / params.phi[j],
            params.omega[j] + dev * dev / params.phi[j], params.lambda[j] - 0.5};
}

/// Posterior law of the noise-block weight A given the rotated observation y.
inline GigParams posterior_a_params_rotated(const JghdParams& params, const Eigen::Ref<const Eigen::VectorXd>& y) {
    const auto p = params.dim();
    const auto nq = params.q();
    const auto r = p - nq;
    const double beta_sq = params.beta.tail(r).squaredNorm();
    const double dev_sq = (y.tail(r) - params.mu.tail(r)).squaredNorm();
    return {params.omega0 + beta_sq / params.b, params.omega0 + dev_sq / params.b,
            params.lambda0 - 0.5 * static_cast<double>(r)};
}

inline GigParams posterior_w_params(const JghdParams& params, const Eigen::VectorXd& x, Eigen::Index j) {
    const Eigen::VectorXd y = params.gamma.transpose() * x;
    return posterior_w_params_rotated(params, y, j);
}

inline GigParams posterior_a_params(const JghdParams& params, const Eigen::VectorXd& x) {
    const Eigen::VectorXd y = params.gamma.transpose() * x;
    return posterior_a_params_rotated(params, y);
}

/// Log density at a rotated observation y = Gamma^T x. Sets *clamped when a
/// Bessel argument hit the degenerate guard.
inline double jghd_log_density_rotated(const JghdParams& params, const Eigen::Ref<const Eigen::VectorXd>& y,
                                       bool* clamped = nullptr) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    const auto p = params.dim();
    const auto nq = params.q();
    double total = 0.0;
    for (Eigen::Index j = 0; j < nq; ++j) {
        const double dev = y[j] - params.mu[j];
        const double d = params.omega[j] + params.beta[j] * params.beta[j] / params.phi[j];
        const double e = params.omega[j] + dev * dev / params.phi[j];
        const double nu = params.lambda[j] - 0.5;
        const double s = guarded_bessel_argument(d, e, clamped);
        total += 0.5 * nu * std::log(e / d) + special::log_bessel_k(nu, s) - kHalfLog2Pi -
                 0.5 * std::log(params.phi[j]) - special::log_bessel_k(params.lambda[j], params.omega[j]) +
                 dev * params.beta[j] / params.phi[j];
    }
    const auto r = p - nq;
    const double rd = static_cast<double>(r);
    const auto dev = y.tail(r) - params.mu.tail(r);
    const double d0 = params.omega0 + params.beta.tail(r).squaredNorm() / params.b;
    const double e0 = params.omega0 + dev.squaredNorm() / params.b;
    const double nu0 = params.lambda0 - 0.5 * rd;
    const double s0 = guarded_bessel_argument(d0, e0, clamped);
    total += 0.5 * nu0 * std::log(e0 / d0) + special::log_bessel_k(nu0, s0) - rd * kHalfLog2Pi -
             0.5 * rd * std::log(params.b) - special::log_bessel_k(params.lambda0, params.omega0) +
             dev.dot(params.beta.tail(r)) / params.b;
    return total;
}

inline double jghd_log_density(const JghdParams& params, const Eigen::VectorXd& x) {
    if (x.size() != params.dim() || !x.allFinite()) {
        throw DomainError("jghd_log_density: x must be a finite p-vector");
    }
    const Eigen::VectorXd y = params.gamma.transpose() * x;
    return jghd_log_density_rotated(params, y);
}

/// One draw X = Gamma (mu + Delta_w beta + V).
template <class Rng>
Eigen::VectorXd jghd_draw(const JghdParams& params, Rng& rng) {
    const auto p = params.dim();
    const auto nq = params.q();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd y(p);
    for (Eigen::Index j = 0; j < nq; ++j) {
        const double w = gig_draw(GigParams{params.omega[j], params.omega[j], params.lambda[j]}, rng);
        y[j] = params.mu[j] + w * params.beta[j] + std::sqrt(w * params.phi[j]) * normal(rng);
    }
    const double a = gig_draw(GigParams{params.omega0, params.omega0, params.lambda0}, rng);
    const double sd = std::sqrt(a * params.b);
    for (Eigen::Index k = nq; k < p; ++k) {
        y[k] = params.mu[k] + a * params.beta[k] + sd * normal(rng);
    }
    return params.gamma * y;
}

/// n x p matrix of draws; a pure function of (params, n, seed).
inline Eigen::MatrixXd jghd_sample(const JghdParams& params, std::size_t n, std::uint64_t seed) {
    params.validate();
    if (n == 0) {
        throw ParameterError("jghd_sample: n must be at least 1");
    }
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), params.dim());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out.row(i) = jghd_draw(params, rng).transpose();
    }
    return out;
}

}  // namespace mjghd
