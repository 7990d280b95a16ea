#pragma once

// Modified Bessel function of the second kind K_nu(z) for real order and
// positive real argument, evaluated in log scale.
//
// The order is reduced to nu = mu + n with mu in [-1/2, 1/2). K_mu and K_{mu+1}
// come from Temme's series (z <= 2), Steed's continued fraction (2 < z <= 25)
// or the Hankel asymptotic expansion (z > 25); K_{mu+n} follows by forward
// recurrence, carried as a product of successive ratios so that neither
// underflow in z nor overflow in the order can occur.
//
// Supported domain: z in [1e-12, 1e6], |nu| <= 1e5.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mjghd/errors.hpp"

namespace mjghd::special {

inline constexpr double kMinArgument = 1e-12;
inline constexpr double kMaxArgument = 1e6;
inline constexpr double kMaxOrder = 1e5;

namespace detail {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// Taylor coefficients of 1/Gamma(1+x) = sum_k c_k x^k about x = 0.
inline constexpr std::array<double, 26> kRecipGamma1p = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

struct TemmeGammas {
    double gam1;   // (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
    double gam2;   // (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
    double gampl;  // 1/Gamma(1+mu)
    double gammi;  // 1/Gamma(1-mu)
};

inline TemmeGammas temme_gammas(double mu) {
    // Split the series into even and odd powers; gam1 is minus the odd part
    // divided by mu, which stays accurate as mu -> 0.
    double even = 0.0;
    double odd_over_mu = 0.0;
    const double mu2 = mu * mu;
    for (int k = static_cast<int>(kRecipGamma1p.size()) - 1; k >= 0; --k) {
        if (k % 2 == 0) {
            even = even * mu2 + kRecipGamma1p[k];
        } else {
            odd_over_mu = odd_over_mu * mu2 + kRecipGamma1p[k];
        }
    }
    // even = sum c_{2m} mu^{2m}; odd_over_mu = sum c_{2m+1} mu^{2m}
    TemmeGammas g{};
    g.gam1 = -odd_over_mu;
    g.gam2 = even;
    g.gampl = even + mu * odd_over_mu;
    g.gammi = even - mu * odd_over_mu;
    return g;
}

/// log(e^z K_mu(z)) and K_{mu+1}(z)/K_mu(z) for |mu| <= 1/2.
struct BasePair {
    double log_scaled_k;
    double ratio;
};

inline BasePair temme_series(double mu, double z) {
    const double half_z = 0.5 * z;
    const double pimu = std::numbers::pi * mu;
    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(half_z);
    double e = mu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;
    const TemmeGammas g = temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = half_z * half_z;
    double sum1 = p;
    const double mu2 = mu * mu;
    for (int i = 1; i < 500; ++i) {
        const double di = i;
        ff = (di * ff + p + q) / (di * di - mu2);
        c *= d / di;
        p /= di - mu;
        q /= di + mu;
        const double del = c * ff;
        sum += del;
        sum1 += c * (p - di * ff);
        if (std::abs(del) < std::abs(sum) * kEps) {
            break;
        }
    }
    const double k_mu = sum;
    const double k_mu1 = sum1 * (2.0 / z);
    return {std::log(k_mu) + z, k_mu1 / k_mu};
}

inline BasePair steed_cf2(double mu, double z) {
    const double mu2 = mu * mu;
    double b = 2.0 * (1.0 + z);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i < 100000; ++i) {
        a -= 2.0 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < kEps) {
            break;
        }
    }
    h *= a1;
    const double log_scaled = 0.5 * std::log(std::numbers::pi / (2.0 * z)) - std::log(s);
    return {log_scaled, (mu + z + 0.5 - h) / z};
}

// Sum of the Hankel expansion sum_k a_k(nu) / z^k.
inline double hankel_sum(double nu, double z) {
    const double four_nu2 = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (four_nu2 - odd * odd) / (8.0 * k * z);
        sum += term;
        if (std::abs(term) < kEps * std::abs(sum)) {
            break;
        }
    }
    return sum;
}

inline BasePair hankel_asymptotic(double mu, double z) {
    const double s0 = hankel_sum(mu, z);
    const double s1 = hankel_sum(mu + 1.0, z);
    return {0.5 * std::log(std::numbers::pi / (2.0 * z)) + std::log(s0), s1 / s0};
}

inline BasePair base_pair(double mu, double z) {
    if (z <= 2.0) {
        return temme_series(mu, z);
    }
    if (z <= 25.0) {
        return steed_cf2(mu, z);
    }
    return hankel_asymptotic(mu, z);
}

inline void check_domain(double order, double z) {
    if (!(z > 0.0) || std::isnan(order)) {
        std::ostringstream msg;
        msg << "bessel_k: argument must be positive (z=" << z << ", order=" << order << ")";
        throw DomainError(msg.str());
    }
    if (z < kMinArgument || z > kMaxArgument || std::abs(order) > kMaxOrder) {
        std::ostringstream msg;
        msg << "bessel_k: (order=" << order << ", z=" << z << ") outside supported range";
        throw RangeError(msg.str());
    }
}

/// Accumulates log(prod r_k) without per-step logarithms.
class LogProduct {
public:
    void multiply(double r) {
        product_ *= r;
        if (product_ > 1e280 || product_ < 1e-280) {
            flush();
        }
    }
    [[nodiscard]] double value() const { return log_sum_ + std::log(product_); }

private:
    void flush() {
        log_sum_ += std::log(product_);
        product_ = 1.0;
    }
    double log_sum_ = 0.0;
    double product_ = 1.0;
};

/// Fills out[k] = log(e^z K_{order+k}(z)) for k = 0..count-1, order >= 0.
template <std::size_t N>
void log_scaled_run(double order, double z, std::array<double, N>& out, std::size_t count) {
    const double n_steps = std::floor(order + 0.5);
    const double mu = order - n_steps;
    const BasePair base = base_pair(mu, z);
    const double two_over_z = 2.0 / z;
    const auto steps = static_cast<long>(n_steps);
    LogProduct acc;
    double ratio = base.ratio;  // K_{mu+k+1} / K_{mu+k}
    std::size_t filled = 0;
    for (long k = 0;; ++k) {
        if (k >= steps) {
            const std::size_t idx = static_cast<std::size_t>(k - steps);
            if (idx < count) {
                out[idx] = base.log_scaled_k + acc.value();
                ++filled;
            }
            if (filled == count) {
                break;
            }
        }
        acc.multiply(ratio);
        ratio = 1.0 / ratio + (mu + static_cast<double>(k) + 1.0) * two_over_z;
    }
}

inline double log_scaled(double order, double z) {
    std::array<double, 1> out{};
    log_scaled_run(std::abs(order), z, out, 1);
    return out[0];
}

inline double finite_or_throw(double value, double order, double z) {
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "bessel_k: log K_" << order << "(" << z << ") not representable";
        throw RangeError(msg.str());
    }
    return value;
}

}  // namespace detail

/// log K_order(z). Even in the order by construction.
inline double log_bessel_k(double order, double z) {
    detail::check_domain(order, z);
    return detail::finite_or_throw(detail::log_scaled(order, z) - z, order, z);
}

/// log(e^z K_order(z)); the exponentially scaled variant.
inline double log_bessel_k_scaled(double order, double z) {
    detail::check_domain(order, z);
    return detail::finite_or_throw(detail::log_scaled(order, z), order, z);
}

/// log K_{order_a}(z) - log K_{order_b}(z), formed from scaled logs so the
/// common e^{-z} factor never appears.
inline double log_bessel_k_ratio(double order_a, double order_b, double z) {
    detail::check_domain(order_a, z);
    detail::check_domain(order_b, z);
    const double a = std::abs(order_a);
    const double b = std::abs(order_b);
    if (a == b) {
        return 0.0;
    }
    // Orders an integer apart share one recurrence.
    const double gap = a - b;
    if (gap == std::round(gap) && std::abs(gap) <= 2.0) {
        std::array<double, 3> run{};
        const auto count = static_cast<std::size_t>(std::abs(gap)) + 1;
        if (gap > 0) {
            detail::log_scaled_run(b, z, run, count);
            return detail::finite_or_throw(run[count - 1] - run[0], order_a, z);
        }
        detail::log_scaled_run(a, z, run, count);
        return detail::finite_or_throw(run[0] - run[count - 1], order_a, z);
    }
    return detail::finite_or_throw(detail::log_scaled(a, z) - detail::log_scaled(b, z), order_a, z);
}

/// log(e^z K_{nu+k}(z)) for k = 0..N-1, sharing recurrences. Negative orders
/// are reflected, so a sequence crossing zero uses at most two runs.
template <std::size_t N>
std::array<double, N> log_bessel_k_scaled_sequence(double nu, double z) {
    static_assert(N >= 1 && N <= 8);
    detail::check_domain(nu, z);
    detail::check_domain(nu + static_cast<double>(N - 1), z);
    std::array<double, N> out{};
    std::size_t neg = 0;  // leading orders below zero
    while (neg < N && nu + static_cast<double>(neg) < 0.0) ++neg;
    if (neg > 0) {
        std::array<double, N> run{};
        detail::log_scaled_run(-(nu + static_cast<double>(neg - 1)), z, run, neg);
        for (std::size_t k = 0; k < neg; ++k) out[k] = run[neg - 1 - k];
    }
    if (neg < N) {
        std::array<double, N> run{};
        detail::log_scaled_run(nu + static_cast<double>(neg), z, run, N - neg);
        for (std::size_t k = neg; k < N; ++k) out[k] = run[k - neg];
    }
    for (double v : out) detail::finite_or_throw(v, nu, z);
    return out;
}

/// Scaled log K for orders nu, nu+1, nu+2.
inline std::array<double, 3> log_bessel_k_scaled_triplet(double nu, double z) {
    return log_bessel_k_scaled_sequence<3>(nu, z);
}

/// d/d(order) log K_order(z), by central differences with one level of
/// Richardson extrapolation. Odd in the order.
inline double dlogk_dorder(double order, double z) {
    detail::check_domain(order, z);
    if (order == 0.0) {
        return 0.0;
    }
    if (order < 0.0) {
        return -dlogk_dorder(-order, z);
    }
    const double h = std::max(1e-6, 1e-6 * order);
    auto central = [&](double step) {
        return (detail::log_scaled(order + step, z) - detail::log_scaled(order - step, z)) /
               (2.0 * step);
    };
    const double coarse = central(h);
    const double fine = central(0.5 * h);
    return detail::finite_or_throw((4.0 * fine - coarse) / 3.0, order, z);
}

}  // namespace mjghd::special
