#pragma once

// Generalized inverse Gaussian law with density
//
//   f(w) = (a/b)^{index/2} / (2 K_index(sqrt(ab))) * w^{index-1} exp{-(a w + b/w)/2},  w > 0.
//
// The symmetric case a = b = omega is the latent weight prior used by the
// joint GH density; unequal a, b arise for the posterior weight laws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "mjghd/errors.hpp"
#include "mjghd/special_functions.hpp"

namespace mjghd {

struct GigParams {
    double a = 1.0;      // coefficient of w
    double b = 1.0;      // coefficient of 1/w
    double index = 0.0;  // lambda

    [[nodiscard]] bool valid() const {
        return a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b) && std::isfinite(index);
    }
};

struct GigMoments {
    double mean = 0.0;      // E[W]
    double mean_sq = 0.0;   // E[W^2]
    double mean_inv = 0.0;  // E[1/W]
    double mean_log = 0.0;  // E[log W]
};

namespace detail {

inline void require_valid(const GigParams& p, const char* where) {
    if (!p.valid()) {
        std::ostringstream msg;
        msg << where << ": invalid GIG parameters (a=" << p.a << ", b=" << p.b
            << ", index=" << p.index << ")";
        throw ParameterError(msg.str());
    }
}

}  // namespace detail

inline double gig_log_density(const GigParams& params, double w) {
    detail::require_valid(params, "gig_log_density");
    if (!(w > 0.0) || !std::isfinite(w)) {
        throw DomainError("gig_log_density: w must be positive and finite");
    }
    const double s = std::sqrt(params.a * params.b);
    return 0.5 * params.index * std::log(params.a / params.b) - std::numbers::ln2 -
           special::log_bessel_k(params.index, s) + (params.index - 1.0) * std::log(w) -
           0.5 * (params.a * w + params.b / w);
}

/// Smallest Bessel argument sqrt(ab) that moments and densities evaluate at.
inline constexpr double kMinBesselArgument = 1e-10;

/// Moments plus log K_index(sqrt(ab)), sharing one Bessel recurrence.
struct GigEvaluation {
    GigMoments moments;
    double log_k_index = 0.0;  // log K_index(s), s = max(sqrt(ab), kMinBesselArgument)
    double bessel_argument = 0.0;
    bool clamped = false;
};

/// E[W] = sqrt(b/a) K_{index+1}/K_index, E[W^2] = (b/a) K_{index+2}/K_index,
/// E[1/W] = sqrt(a/b) K_{index+1}/K_index - 2 index / b,
/// E[log W] = log sqrt(b/a) + d/dnu log K_nu at nu = index.
///
/// E[1/W] is evaluated as sqrt(a/b) K_{index-1}/K_index, the same quantity
/// after the three-term recurrence; the displayed difference cancels badly
/// for positive index and large b. With with_log = false the order
/// derivative is skipped and mean_log is 0.
inline GigEvaluation gig_evaluate(const GigParams& params, bool with_log = true) {
    detail::require_valid(params, "gig_expectations");
    GigEvaluation out;
    double s = std::sqrt(params.a * params.b);
    if (s < kMinBesselArgument) {
        s = kMinBesselArgument;
        out.clamped = true;
    }
    out.bessel_argument = s;
    const auto logk = special::log_bessel_k_scaled_sequence<4>(params.index - 1.0, s);
    const double ratio_down = std::exp(logk[0] - logk[1]);
    const double ratio1 = std::exp(logk[2] - logk[1]);
    const double ratio2 = std::exp(logk[3] - logk[1]);
    const double scale = std::sqrt(params.b / params.a);
    GigMoments& m = out.moments;
    m.mean = scale * ratio1;
    m.mean_sq = scale * scale * ratio2;
    m.mean_inv = ratio_down / scale;
    if (with_log) {
        m.mean_log = std::log(scale) + special::dlogk_dorder(params.index, s);
    }
    out.log_k_index = logk[1] - s;
    return out;
}

inline GigMoments gig_expectations(const GigParams& params) {
    return gig_evaluate(params, true).moments;
}

namespace detail {

/// Mode of x^(lambda - 1) exp(-omega (x + 1/x) / 2).
inline double gig_mode(double lambda, double omega) {
    return lambda >= 1.0 ? (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega
                         : omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

/// Ratio-of-uniforms with the mode shifted to the origin; for lambda > 2 or
/// omega > 3.
template <class Rng>
double gig_rou_shift(double lambda, double omega, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

    // Roots in (0, xm) and (xm, inf) of the cubic locating the extrema of
    // (x - xm) sqrt(f(x)), via Cardano's rule on the depressed cubic.
    const double ca = -(2.0 * (lambda + 1.0) / omega + xm);
    const double cb = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    const double cc = xm;
    const double p = cb - ca * ca / 3.0;
    const double q = 2.0 * ca * ca * ca / 27.0 - ca * cb / 3.0 + cc;
    const double fi = std::acos(std::clamp(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)), -1.0, 1.0));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - ca / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - ca / 3.0;

    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

    for (;;) {
        const double u = uminus + unif(rng) * (uplus - uminus);
        const double v = unif(rng);
        if (v <= 0.0) {
            continue;
        }
        const double x = u / v + xm;
        if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) {
            return x;
        }
    }
}

/// Ratio-of-uniforms without shift; for moderate lambda and omega.
template <class Rng>
double gig_rou_noshift(double lambda, double omega, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (;;) {
        const double u = um * unif(rng);
        const double v = unif(rng);
        if (v <= 0.0 || u <= 0.0) {
            continue;
        }
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) {
            return x;
        }
    }
}

/// Rejection from a piecewise (constant, power, exponential) hat; for
/// lambda < 1 with small omega, where the density is not T-concave.
template <class Rng>
double gig_rejection_small_omega(double lambda, double omega, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    const double a0 = k0 * x0;
    double k1 = 0.0;
    double a1 = 0.0;
    double k2 = 0.0;
    double a2 = 0.0;
    if (x0 >= 2.0 / omega) {
        k2 = std::pow(x0, lambda - 1.0);
        a2 = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        a1 = lambda == 0.0 ? k1 * std::log(2.0 / (omega * omega))
                           : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        a2 = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = a0 + a1 + a2;
    const double tail_start = std::max(x0, 2.0 / omega);
    for (;;) {
        double v = total * unif(rng);
        double x = 0.0;
        double hx = 0.0;
        if (v <= a0) {
            x = x0 * v / a0;
            hx = k0;
        } else if ((v -= a0) <= a1) {
            if (lambda == 0.0) {
                x = omega * std::exp(std::exp(omega) * v);
                hx = k1 / x;
            } else {
                x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
                hx = k1 * std::pow(x, lambda - 1.0);
            }
        } else {
            v -= a1;
            x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v);
            hx = k2 * std::exp(-omega / 2.0 * x);
        }
        const double u = unif(rng) * hx;
        if (x > 0.0 && std::isfinite(x) && u > 0.0 &&
            std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) {
            return x;
        }
    }
}

}  // namespace detail

/// One GIG draw (Hormann and Leydold): ratio-of-uniforms with or without mode
/// shift, or a non-T-concave rejection hat when lambda < 1 and omega is small,
/// where the shifted method's acceptance rate goes to zero.
template <class Rng>
double gig_draw(const GigParams& params, Rng& rng) {
    const double lambda = std::abs(params.index);
    const double omega = std::sqrt(params.a * params.b);
    const double alpha = std::sqrt(params.b / params.a);
    double x = 0.0;
    if (lambda > 2.0 || omega > 3.0) {
        x = detail::gig_rou_shift(lambda, omega, rng);
    } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
        x = detail::gig_rou_noshift(lambda, omega, rng);
    } else {
        x = detail::gig_rejection_small_omega(lambda, omega, rng);
    }
    return params.index < 0.0 ? alpha / x : alpha * x;
}

/// n i.i.d. draws; the sequence is a pure function of (params, n, seed).
inline std::vector<double> gig_sample(const GigParams& params, std::size_t n, std::uint64_t seed) {
    detail::require_valid(params, "gig_sample");
    if (n == 0) {
        throw ParameterError("gig_sample: n must be at least 1");
    }
    std::mt19937_64 rng(seed);
    std::vector<double> out(n);
    for (auto& w : out) {
        w = gig_draw(params, rng);
    }
    return out;
}

}  // namespace mjghd
