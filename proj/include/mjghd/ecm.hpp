#pragma once

// Multi-cycle ECM fitter for mixtures of JGHDs.
//
// One iteration is
//   E-step -> CM-step 1 (weights, mu, beta, phi, b, Omega, lambda, omega0, lambda0)
//   E-step -> CM-step 2 (orientation matrices Gamma_g, one majorization step).
// Every conditional maximization is guarded so that it never decreases the
// expected complete-data log-likelihood, which keeps the observed-data
// log-likelihood monotone up to floating point.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mjghd/errors.hpp"
#include "mjghd/gig.hpp"
#include "mjghd/jghd.hpp"
#include "mjghd/model.hpp"
#include "mjghd/special_functions.hpp"

namespace mjghd {

struct FitConfig {
    int max_iterations = 500;
    double loglik_rel_tol = 1e-8;
    int n_starts = 10;
    std::uint64_t seed = 1;
    int newton_max_steps = 3;
    double param_floor = 1e-6;  // lower clamp for phi, b, Omega, omega0 and E[1/W]
    int workers = 1;            // concurrent starts; results do not depend on it

    void validate() const {
        if (max_iterations < 1) throw ParameterError("FitConfig: max_iterations must be >= 1");
        if (!(loglik_rel_tol > 0.0)) throw ParameterError("FitConfig: loglik_rel_tol must be > 0");
        if (n_starts < 1) throw ParameterError("FitConfig: n_starts must be >= 1");
        if (newton_max_steps < 0) throw ParameterError("FitConfig: newton_max_steps must be >= 0");
        if (!(param_floor > 0.0)) throw ParameterError("FitConfig: param_floor must be > 0");
        if (workers < 1) throw ParameterError("FitConfig: workers must be >= 1");
    }
};

/// Conditional expectations of one component's latent weights, n rows.
struct ComponentExpectations {
    Eigen::MatrixXd e1, e2, e3, e4;  // n x q: E[W], E[W^2], E[1/W], E[log W]
    Eigen::VectorXd j1, j2, j3, j4;  // n: same for the noise weight A
};

struct LatentExpectations {
    Eigen::MatrixXd zhat;  // n x G responsibilities
    std::vector<ComponentExpectations> components;
    double loglik = 0.0;   // observed-data log-likelihood of the model used
    int inverse_clamps = 0;   // non-positive E[1/W] or E[1/A] values replaced by the floor
    int argument_clamps = 0;  // Bessel arguments raised to the guard
};

/// Counters of guarded events during CM steps.
struct StepFlags {
    int degenerate_denominators = 0;
    int lambda_skips = 0;
    int omega_rejections = 0;
    int svd_failures = 0;
    int reorthonormalizations = 0;
    int orientation_rejections = 0;
};

/// Worst-case invariant checks collected while iterating.
struct FitDiagnostics {
    double worst_loglik_drop = 0.0;     // max over steps of (prev - cur) / |cur|, 0 if monotone
    double worst_row_sum_error = 0.0;   // max |sum_g zhat_ig - 1|
    double worst_orthogonality = 0.0;   // max ||Gamma^T Gamma - I||_max after CM-step 2
    StepFlags flags;
    int inverse_clamps = 0;
    int argument_clamps = 0;

    void merge(const FitDiagnostics& other) {
        worst_loglik_drop = std::max(worst_loglik_drop, other.worst_loglik_drop);
        worst_row_sum_error = std::max(worst_row_sum_error, other.worst_row_sum_error);
        worst_orthogonality = std::max(worst_orthogonality, other.worst_orthogonality);
        flags.degenerate_denominators += other.flags.degenerate_denominators;
        flags.lambda_skips += other.flags.lambda_skips;
        flags.omega_rejections += other.flags.omega_rejections;
        flags.svd_failures += other.flags.svd_failures;
        flags.reorthonormalizations += other.flags.reorthonormalizations;
        flags.orientation_rejections += other.flags.orientation_rejections;
        inverse_clamps += other.inverse_clamps;
        argument_clamps += other.argument_clamps;
    }
};

struct StartRecord {
    int start = 0;
    bool succeeded = false;
    double final_loglik = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::string failure;
};

struct FitResult {
    MjghdModel model;
    Eigen::MatrixXd zhat;
    std::vector<double> loglik_trace;
    bool converged = false;
    int n_iterations = 0;
    std::vector<int> hard_labels;  // 0-based argmax of zhat rows
    int best_start = 0;
    std::vector<StartRecord> starts;
    FitDiagnostics diagnostics;  // merged over every start that ran

    [[nodiscard]] double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

// ---------------------------------------------------------------------------
// E-step

struct EStepOptions {
    bool with_log_moments = true;
    double param_floor = 1e-6;
};

inline LatentExpectations e_step(const MjghdModel& model, const Eigen::MatrixXd& data,
                                 const EStepOptions& options = {}) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    const auto n = data.rows();
    const auto n_comp = model.num_components();
    LatentExpectations out;
    out.components.resize(static_cast<std::size_t>(n_comp));
    Eigen::MatrixXd log_terms(n, n_comp);

    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const auto& comp = model.components[static_cast<std::size_t>(g)];
        const auto p = comp.dim();
        const auto nq = comp.q();
        const auto r = p - nq;
        const double rd = static_cast<double>(r);
        auto& ce = out.components[static_cast<std::size_t>(g)];
        ce.e1.resize(n, nq);
        ce.e2.resize(n, nq);
        ce.e3.resize(n, nq);
        ce.e4.setZero(n, nq);
        ce.j1.resize(n);
        ce.j2.resize(n);
        ce.j3.resize(n);
        ce.j4.setZero(n);

        // Per-component constants of the log density.
        double constant = std::log(model.weights[g]) - static_cast<double>(nq) * kHalfLog2Pi -
                          rd * kHalfLog2Pi - 0.5 * rd * std::log(comp.b) -
                          special::log_bessel_k(comp.lambda0, comp.omega0);
        for (Eigen::Index j = 0; j < nq; ++j) {
            constant -= 0.5 * std::log(comp.phi[j]) + special::log_bessel_k(comp.lambda[j], comp.omega[j]);
        }

        const Eigen::MatrixXd rotated = data * comp.gamma;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd y = rotated.row(i).transpose();
            double log_density = constant;
            for (Eigen::Index j = 0; j < nq; ++j) {
                const GigParams post = posterior_w_params_rotated(comp, y, j);
                const GigEvaluation ev = gig_evaluate(post, options.with_log_moments);
                const double dev = y[j] - comp.mu[j];
                log_density += 0.5 * post.index * std::log(post.b / post.a) + ev.log_k_index +
                               dev * comp.beta[j] / comp.phi[j];
                out.argument_clamps += ev.clamped ? 1 : 0;
                double inv = ev.moments.mean_inv;
                if (!(inv > 0.0) || !std::isfinite(inv)) {
                    inv = options.param_floor;
                    ++out.inverse_clamps;
                }
                ce.e1(i, j) = ev.moments.mean;
                ce.e2(i, j) = ev.moments.mean_sq;
                ce.e3(i, j) = inv;
                ce.e4(i, j) = ev.moments.mean_log;
            }
            const GigParams post = posterior_a_params_rotated(comp, y);
            const GigEvaluation ev = gig_evaluate(post, options.with_log_moments);
            const double dev_beta = (y.tail(r) - comp.mu.tail(r)).dot(comp.beta.tail(r));
            log_density += 0.5 * post.index * std::log(post.b / post.a) + ev.log_k_index + dev_beta / comp.b;
            out.argument_clamps += ev.clamped ? 1 : 0;
            double inv = ev.moments.mean_inv;
            if (!(inv > 0.0) || !std::isfinite(inv)) {
                inv = options.param_floor;
                ++out.inverse_clamps;
            }
            ce.j1[i] = ev.moments.mean;
            ce.j2[i] = ev.moments.mean_sq;
            ce.j3[i] = inv;
            ce.j4[i] = ev.moments.mean_log;
            log_terms(i, g) = log_density;
        }
    }

    out.zhat.resize(n, n_comp);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lse = log_sum_exp(log_terms.row(i).transpose());
        total += lse;
        out.zhat.row(i) = (log_terms.row(i).array() - lse).exp();
        out.zhat.row(i) /= out.zhat.row(i).sum();
    }
    if (!std::isfinite(total)) throw FitError("e_step: non-finite log-likelihood");
    out.loglik = total;
    return out;
}

// ---------------------------------------------------------------------------
// CM-step 1

/// n_g, the column sums of the responsibility matrix.
inline Eigen::VectorXd component_sizes(const LatentExpectations& ex) { return ex.zhat.colwise().sum().transpose(); }

inline Eigen::VectorXd cm1_update_weights(const LatentExpectations& ex) {
    const Eigen::VectorXd sizes = component_sizes(ex);
    for (Eigen::Index g = 0; g < sizes.size(); ++g) {
        if (sizes[g] < 2.0) {
            std::ostringstream msg;
            msg << "component " << g << " collapsed (n_g = " << sizes[g] << ")";
            throw FitError(msg.str());
        }
    }
    return sizes / sizes.sum();
}

namespace detail {

// E[Delta_W]_j and E[Delta_{1/W}]_j for every rotated coordinate j < p.
inline void weight_columns(const ComponentExpectations& ce, Eigen::Index j, Eigen::Index q,
                           Eigen::Ref<Eigen::VectorXd> mean_w, Eigen::Ref<Eigen::VectorXd> mean_inv) {
    if (j < q) {
        mean_w = ce.e1.col(j);
        mean_inv = ce.e3.col(j);
    } else {
        mean_w = ce.j1;
        mean_inv = ce.j3;
    }
}

}  // namespace detail

struct LocationSkewness {
    Eigen::MatrixXd mu;    // G x p
    Eigen::MatrixXd beta;  // G x p
    int degenerate = 0;    // coordinates that kept their previous value
};

/// Joint maximizer of Q over (mu_g, beta_g) for fixed Gamma_g and latent
/// expectations; coordinates with a vanishing denominator keep their value.
inline LocationSkewness cm1_update_location_skewness(const LatentExpectations& ex, const Eigen::MatrixXd& data,
                                                     const MjghdModel& model) {
    const auto n = data.rows();
    const auto n_comp = model.num_components();
    const auto p = model.dim();
    LocationSkewness out{Eigen::MatrixXd(n_comp, p), Eigen::MatrixXd(n_comp, p), 0};
    Eigen::VectorXd mean_w(n), mean_inv(n);
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const auto& comp = model.components[static_cast<std::size_t>(g)];
        const auto& ce = ex.components[static_cast<std::size_t>(g)];
        const Eigen::VectorXd z = ex.zhat.col(g);
        const double n_g = z.sum();
        const Eigen::MatrixXd rotated = data * comp.gamma;
        for (Eigen::Index j = 0; j < p; ++j) {
            detail::weight_columns(ce, j, comp.q(), mean_w, mean_inv);
            const double avg_w = z.dot(mean_w) / n_g;
            const double avg_inv = z.dot(mean_inv) / n_g;
            const Eigen::VectorXd y = rotated.col(j);
            const Eigen::ArrayXd mu_weight = avg_w * mean_inv.array() - 1.0;
            const double denom = (z.array() * mu_weight).sum();
            if (!(std::abs(denom) >= 1e-12 * n_g)) {
                out.mu(g, j) = comp.mu[j];
                out.beta(g, j) = comp.beta[j];
                ++out.degenerate;
                continue;
            }
            out.mu(g, j) = (z.array() * y.array() * mu_weight).sum() / denom;
            out.beta(g, j) = (z.array() * y.array() * (avg_inv - mean_inv.array())).sum() / denom;
        }
    }
    return out;
}

/// Diagonal h-criterion for every rotated coordinate, from the current mu/beta.
inline Eigen::VectorXd h_criterion(const ComponentExpectations& ce, const Eigen::VectorXd& z,
                                   const Eigen::MatrixXd& rotated, const JghdParams& comp) {
    const auto p = comp.dim();
    const auto n = rotated.rows();
    const double n_g = z.sum();
    Eigen::VectorXd h(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::ArrayXd dev = rotated.col(j).array() - comp.mu[j];
        const Eigen::ArrayXd ew = j < comp.q() ? Eigen::ArrayXd(ce.e1.col(j)) : Eigen::ArrayXd(ce.j1);
        const Eigen::ArrayXd ew2 = j < comp.q() ? Eigen::ArrayXd(ce.e2.col(j)) : Eigen::ArrayXd(ce.j2);
        const double beta = comp.beta[j];
        h[j] = (z.array() * (dev.square() - 2.0 * dev * beta * ew + ew2 * beta * beta)).sum() / n_g;
        (void)n;
    }
    return h;
}

/// Permutation of the subspace axes sorting h descending (stable). Entry k
/// is the old index of the axis that moves to position k.
inline std::vector<int> subspace_order(const Eigen::VectorXd& h, Eigen::Index q) {
    std::vector<int> perm(static_cast<std::size_t>(q));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return h[a] > h[b]; });
    return perm;
}

/// Relabels the subspace axes of a component (and its expectations, if
/// given). The noise block is untouched, so the density is unchanged.
inline void permute_subspace(JghdParams& comp, const std::vector<int>& perm, ComponentExpectations* ce = nullptr) {
    const auto q = comp.q();
    JghdParams src = comp;
    for (Eigen::Index k = 0; k < q; ++k) {
        const auto old = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(k)]);
        comp.gamma.col(k) = src.gamma.col(old);
        comp.mu[k] = src.mu[old];
        comp.beta[k] = src.beta[old];
        comp.phi[k] = src.phi[old];
        comp.omega[k] = src.omega[old];
        comp.lambda[k] = src.lambda[old];
    }
    if (ce != nullptr) {
        const ComponentExpectations copy = *ce;
        for (Eigen::Index k = 0; k < q; ++k) {
            const auto old = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(k)]);
            ce->e1.col(k) = copy.e1.col(old);
            ce->e2.col(k) = copy.e2.col(old);
            ce->e3.col(k) = copy.e3.col(old);
            ce->e4.col(k) = copy.e4.col(old);
        }
    }
}

struct ScaleUpdate {
    std::vector<Eigen::VectorXd> phi;        // per component, in the new axis order
    Eigen::VectorXd b;                       // G
    std::vector<std::vector<int>> ordering;  // per component subspace permutation
};

/// phi_g and b_g given updated mu/beta, with the subspace axes reordered by
/// the h-criterion. Throws FitError on numerical blow-up.
inline ScaleUpdate cm1_update_scales(const LatentExpectations& ex, const Eigen::MatrixXd& data,
                                     const MjghdModel& model, const FitConfig& config) {
    const auto n_comp = model.num_components();
    const auto p = model.dim();
    const auto n = data.rows();
    // Blow-up reference: largest column variance of the data.
    const Eigen::RowVectorXd means = data.colwise().mean();
    const double data_scale =
        std::max(((data.rowwise() - means).array().square().colwise().sum() / std::max<double>(1.0, n - 1.0)).maxCoeff(),
                 config.param_floor);
    const double limit = 1e10 * data_scale;

    ScaleUpdate out;
    out.b.resize(n_comp);
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const auto& comp = model.components[static_cast<std::size_t>(g)];
        const auto& ce = ex.components[static_cast<std::size_t>(g)];
        const auto q = comp.q();
        const Eigen::VectorXd z = ex.zhat.col(g);
        const double n_g = z.sum();
        const Eigen::MatrixXd rotated = data * comp.gamma;

        const Eigen::VectorXd h = h_criterion(ce, z, rotated, comp);
        std::vector<int> perm = subspace_order(h, q);

        Eigen::VectorXd phi(q);
        for (Eigen::Index k = 0; k < q; ++k) {
            const auto j = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(k)]);
            const Eigen::ArrayXd dev = rotated.col(j).array() - comp.mu[j];
            const double beta = comp.beta[j];
            phi[k] = (z.array() * (ce.e3.col(j).array() * dev.square() - 2.0 * dev * beta +
                                   ce.e1.col(j).array() * beta * beta))
                         .sum() /
                     n_g;
        }
        const auto r = p - q;
        double b_sum = 0.0;
        for (Eigen::Index k = q; k < p; ++k) {
            const Eigen::ArrayXd dev = rotated.col(k).array() - comp.mu[k];
            const double beta = comp.beta[k];
            b_sum += (z.array() * (ce.j3.array() * dev.square() - 2.0 * dev * beta + ce.j1.array() * beta * beta)).sum();
        }
        double b = b_sum / (n_g * static_cast<double>(r));

        auto check = [&](double v, const char* what) {
            if (!std::isfinite(v) || v > limit) {
                std::ostringstream msg;
                msg << "component " << g << ": " << what << " blew up (" << v << ")";
                throw FitError(msg.str());
            }
        };
        for (Eigen::Index k = 0; k < q; ++k) {
            check(phi[k], "phi");
            phi[k] = std::max(phi[k], config.param_floor);
        }
        check(b, "b");
        b = std::max(b, config.param_floor);
        out.phi.push_back(std::move(phi));
        out.b[g] = b;
        out.ordering.push_back(std::move(perm));
        (void)n;
    }
    return out;
}

/// Weighted averages of E[W], E[1/W], E[log W] entering the GIG objective.
struct GigSufficient {
    double mean_w = 1.0;
    double mean_inv = 1.0;
    double mean_log = 0.0;
};

/// q(Omega, lambda) = -log K_lambda(Omega) + (lambda - 1) Ebar[log W] - Omega/2 (Ebar[W] + Ebar[1/W]).
inline double gig_objective(double omega, double lambda, const GigSufficient& s) {
    return -special::log_bessel_k(lambda, omega) + (lambda - 1.0) * s.mean_log -
           0.5 * omega * (s.mean_w + s.mean_inv);
}

/// dq/dOmega and d2q/dOmega2 in closed form via R = K_{lambda+1}/K_lambda.
inline std::pair<double, double> gig_objective_omega_derivatives(double omega, double lambda, const GigSufficient& s) {
    const double ratio = std::exp(special::log_bessel_k_ratio(lambda + 1.0, lambda, omega));
    const double first = ratio - lambda / omega - 0.5 * (s.mean_w + s.mean_inv);
    const double second = ratio * ratio - (2.0 * lambda + 1.0) * ratio / omega - 1.0 + lambda / (omega * omega);
    return {first, second};
}

/// Unguarded Newton increment -q'/q'' in Omega.
inline double newton_omega_increment(double omega, double lambda, const GigSufficient& s) {
    const auto [first, second] = gig_objective_omega_derivatives(omega, lambda, s);
    return -first / second;
}

struct GigUpdate {
    double omega = 1.0;
    double lambda = 0.0;
    bool lambda_skipped = false;
    bool omega_rejected = false;
};

/// One multiplicative fixed-point step for lambda, then Newton steps for
/// Omega. Both are halved toward the previous value until q does not decrease.
inline GigUpdate update_gig_params(double omega, double lambda, const GigSufficient& s, int newton_max_steps,
                                   double floor) {
    constexpr int kMaxHalvings = 30;
    GigUpdate out{omega, lambda, false, false};

    const double slope = special::dlogk_dorder(lambda, omega);
    if (std::abs(slope) < 1e-12) {
        out.lambda_skipped = true;
    } else {
        const double target = s.mean_log * lambda / slope;
        const double base = gig_objective(omega, lambda, s);
        double step = target - lambda;
        bool accepted = false;
        for (int k = 0; k < kMaxHalvings && std::isfinite(step); ++k, step *= 0.5) {
            const double candidate = lambda + step;
            if (std::abs(candidate) > 0.5 * special::kMaxOrder) continue;
            const double value = gig_objective(omega, candidate, s);
            if (std::isfinite(value) && value >= base) {
                out.lambda = candidate;
                accepted = true;
                break;
            }
        }
        if (!accepted) out.lambda_skipped = true;
    }

    for (int it = 0; it < newton_max_steps; ++it) {
        const double base = gig_objective(out.omega, out.lambda, s);
        const auto [first, second] = gig_objective_omega_derivatives(out.omega, out.lambda, s);
        if (!(second < 0.0) || !std::isfinite(first)) {
            out.omega_rejected = true;
            break;
        }
        double step = -first / second;
        bool accepted = false;
        for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
            const double candidate = std::clamp(out.omega + step, floor, special::kMaxArgument);
            const double value = gig_objective(candidate, out.lambda, s);
            if (std::isfinite(value) && value >= base) {
                accepted = candidate != out.omega;
                out.omega = candidate;
                break;
            }
        }
        if (!accepted) {
            out.omega_rejected = true;
            break;
        }
    }
    return out;
}

inline GigSufficient gig_sufficient(const Eigen::VectorXd& z, const Eigen::Ref<const Eigen::VectorXd>& mean_w,
                                    const Eigen::Ref<const Eigen::VectorXd>& mean_inv,
                                    const Eigen::Ref<const Eigen::VectorXd>& mean_log) {
    const double n_g = z.sum();
    return {z.dot(mean_w) / n_g, z.dot(mean_inv) / n_g, z.dot(mean_log) / n_g};
}

struct GigParamUpdate {
    std::vector<Eigen::VectorXd> omega, lambda;  // per component, length q_g
    Eigen::VectorXd omega0, lambda0;             // G
    int lambda_skips = 0;
    int omega_rejections = 0;
};

/// Tail and concentration updates for every component, subspace axes from
/// E1/E3/E4 and the noise block from J1/J3/J4.
inline GigParamUpdate cm1_update_gig_params(const LatentExpectations& ex, const MjghdModel& model,
                                            const FitConfig& config) {
    const auto n_comp = model.num_components();
    GigParamUpdate out;
    out.omega0.resize(n_comp);
    out.lambda0.resize(n_comp);
    auto note = [&](const GigUpdate& u) {
        out.lambda_skips += u.lambda_skipped ? 1 : 0;
        out.omega_rejections += u.omega_rejected ? 1 : 0;
    };
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        const auto& comp = model.components[gi];
        const auto& ce = ex.components[gi];
        const Eigen::VectorXd z = ex.zhat.col(g);
        Eigen::VectorXd omega = comp.omega;
        Eigen::VectorXd lambda = comp.lambda;
        for (Eigen::Index j = 0; j < comp.q(); ++j) {
            const GigSufficient s = gig_sufficient(z, ce.e1.col(j), ce.e3.col(j), ce.e4.col(j));
            const GigUpdate u = update_gig_params(omega[j], lambda[j], s, config.newton_max_steps, config.param_floor);
            omega[j] = u.omega;
            lambda[j] = u.lambda;
            note(u);
        }
        const GigSufficient s0 = gig_sufficient(z, ce.j1, ce.j3, ce.j4);
        const GigUpdate u0 = update_gig_params(comp.omega0, comp.lambda0, s0, config.newton_max_steps, config.param_floor);
        out.omega0[g] = u0.omega;
        out.lambda0[g] = u0.lambda;
        note(u0);
        out.omega.push_back(std::move(omega));
        out.lambda.push_back(std::move(lambda));
    }
    return out;
}

/// Applies every CM-step-1 update to the model in place. The expectations are
/// permuted alongside the subspace axes.
inline void cm_step1(MjghdModel& model, LatentExpectations& ex, const Eigen::MatrixXd& data, const FitConfig& config,
                     StepFlags& flags) {
    model.weights = cm1_update_weights(ex);

    const LocationSkewness ls = cm1_update_location_skewness(ex, data, model);
    flags.degenerate_denominators += ls.degenerate;
    for (Eigen::Index g = 0; g < model.num_components(); ++g) {
        auto& comp = model.components[static_cast<std::size_t>(g)];
        comp.mu = ls.mu.row(g).transpose();
        comp.beta = ls.beta.row(g).transpose();
    }

    const ScaleUpdate scales = cm1_update_scales(ex, data, model, config);
    for (Eigen::Index g = 0; g < model.num_components(); ++g) {
        const auto gi = static_cast<std::size_t>(g);
        auto& comp = model.components[gi];
        permute_subspace(comp, scales.ordering[gi], &ex.components[gi]);
        comp.phi = scales.phi[gi];
        comp.b = scales.b[g];
    }

    const GigParamUpdate gp = cm1_update_gig_params(ex, model, config);
    for (Eigen::Index g = 0; g < model.num_components(); ++g) {
        const auto gi = static_cast<std::size_t>(g);
        auto& comp = model.components[gi];
        comp.omega = gp.omega[gi];
        comp.lambda = gp.lambda[gi];
        comp.omega0 = gp.omega0[g];
        comp.lambda0 = gp.lambda0[g];
    }
    flags.lambda_skips += gp.lambda_skips;
    flags.omega_rejections += gp.omega_rejections;
}

// ---------------------------------------------------------------------------
// CM-step 2

/// Majorizer matrix F_t for component g, such that the Gamma-dependent part
/// of -Q is bounded above by constant + Tr(F_t Gamma), tight at the current Gamma.
inline Eigen::MatrixXd majorizer_matrix(const LatentExpectations& ex, const Eigen::MatrixXd& data,
                                        const JghdParams& comp, Eigen::Index g) {
    const auto n = data.rows();
    const auto p = comp.dim();
    const auto q = comp.q();
    const auto& ce = ex.components[static_cast<std::size_t>(g)];
    Eigen::VectorXd inv_scale(p);
    inv_scale.head(q) = comp.phi.cwiseInverse();
    inv_scale.tail(p - q).setConstant(1.0 / comp.b);

    const Eigen::MatrixXd rotated = data * comp.gamma;
    Eigen::MatrixXd weights(n, p);  // z_i (Y_i D_i - alpha_i Y_i - c_i), row-wise
    Eigen::VectorXd inv_w(p);
    for (Eigen::Index i = 0; i < n; ++i) {
        inv_w.head(q) = ce.e3.row(i).transpose();
        inv_w.tail(p - q).setConstant(ce.j3[i]);
        const Eigen::ArrayXd d = inv_w.array() * inv_scale.array();
        const double alpha = d.maxCoeff();
        // Y D - alpha Y - c with c = D (mu + beta / E[1/W]), grouped to limit cancellation.
        const Eigen::ArrayXd y = rotated.row(i).transpose().array();
        const Eigen::ArrayXd centre = comp.mu.array() + comp.beta.array() / inv_w.array();
        weights.row(i) = (ex.zhat(i, g) * (d * (y - centre) - alpha * y)).matrix().transpose();
    }
    // G = X^T W; the majorizer is Tr(G^T Gamma), i.e. F_t = G^T.
    return (data.transpose() * weights).transpose();
}

/// Gamma-dependent part of -Q for one component, up to a Gamma-free
/// constant. Written as a sum of squares about mu + beta / E[1/W], which
/// avoids the cancellation of the expanded quadratic when scales are tiny.
inline double orientation_objective(const LatentExpectations& ex, const Eigen::MatrixXd& data, const JghdParams& comp,
                                    const Eigen::MatrixXd& gamma, Eigen::Index g) {
    const auto p = comp.dim();
    const auto q = comp.q();
    const auto& ce = ex.components[static_cast<std::size_t>(g)];
    Eigen::VectorXd inv_scale(p);
    inv_scale.head(q) = comp.phi.cwiseInverse();
    inv_scale.tail(p - q).setConstant(1.0 / comp.b);
    const Eigen::MatrixXd rotated = data * gamma;
    double total = 0.0;
    Eigen::VectorXd inv_w(p);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        inv_w.head(q) = ce.e3.row(i).transpose();
        inv_w.tail(p - q).setConstant(ce.j3[i]);
        const Eigen::ArrayXd centre = comp.mu.array() + comp.beta.array() / inv_w.array();
        const Eigen::ArrayXd dev = rotated.row(i).transpose().array() - centre;
        total += 0.5 * ex.zhat(i, g) * (inv_w.array() * inv_scale.array() * dev.square()).sum();
    }
    return total;
}

struct OrientationUpdate {
    std::vector<Eigen::MatrixXd> gamma;
    int svd_failures = 0;
    int reorthonormalizations = 0;
    int rejections = 0;  // steps that raised the objective through round-off
};

struct OrthogonalMinimizer {
    Eigen::MatrixXd gamma;
    bool ok = false;
    bool reorthonormalized = false;
};

/// argmin of Tr(F Gamma) over orthogonal Gamma: with -F = P B R^T, Gamma = R P^T.
/// Drift from orthogonality beyond 1e-10 is removed by a polar projection.
inline OrthogonalMinimizer orthogonal_minimizer(const Eigen::MatrixXd& f) {
    OrthogonalMinimizer out;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(-f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.gamma = svd.matrixV() * svd.matrixU().transpose();
    if (svd.info() != Eigen::Success || !out.gamma.allFinite()) return out;
    out.ok = true;
    const auto p = out.gamma.cols();
    const double drift = (out.gamma.transpose() * out.gamma - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
    if (drift > 1e-10) {
        Eigen::JacobiSVD<Eigen::MatrixXd> polar(out.gamma, Eigen::ComputeFullU | Eigen::ComputeFullV);
        out.gamma = polar.matrixU() * polar.matrixV().transpose();
        out.reorthonormalized = true;
    }
    return out;
}

/// One majorization step per component. A step that does not lower the
/// objective is discarded.
inline OrientationUpdate cm2_update_orientation(const LatentExpectations& ex, const Eigen::MatrixXd& data,
                                                const MjghdModel& model) {
    OrientationUpdate out;
    for (Eigen::Index g = 0; g < model.num_components(); ++g) {
        const auto& comp = model.components[static_cast<std::size_t>(g)];
        OrthogonalMinimizer step = orthogonal_minimizer(majorizer_matrix(ex, data, comp, g));
        if (!step.ok) {
            out.gamma.push_back(comp.gamma);
            ++out.svd_failures;
            continue;
        }
        out.reorthonormalizations += step.reorthonormalized ? 1 : 0;
        Eigen::MatrixXd gamma = std::move(step.gamma);
        if (orientation_objective(ex, data, comp, gamma, g) > orientation_objective(ex, data, comp, comp.gamma, g)) {
            out.gamma.push_back(comp.gamma);
            ++out.rejections;
            continue;
        }
        out.gamma.push_back(std::move(gamma));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Initialization

inline void validate_subspace_dims(const std::vector<int>& q_per_component, Eigen::Index p) {
    if (q_per_component.empty()) throw ParameterError("need at least one component");
    for (int q : q_per_component) {
        if (q < 1 || q >= p) {
            std::ostringstream msg;
            msg << "subspace dimension " << q << " must satisfy 0 < q < p = " << p;
            throw ParameterError(msg.str());
        }
    }
}

/// Component parameters from a hard assignment: PCA rotation of the member
/// covariance, rotated mean, zero skewness, inverse-Gaussian-like weights.
inline JghdParams component_from_members(const Eigen::MatrixXd& members, int q, double floor) {
    const auto p = members.cols();
    const Eigen::RowVectorXd mean = members.colwise().mean();
    const Eigen::MatrixXd centered = members.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(members.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= floor) {
        cov += floor * Eigen::MatrixXd::Identity(p, p);
        eig.compute(cov);
    }
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    JghdParams c;
    c.gamma = vectors;
    c.mu = vectors.transpose() * mean.transpose();
    c.beta = Eigen::VectorXd::Zero(p);
    c.phi = values.head(q).cwiseMax(floor);
    c.b = std::max(values.tail(p - q).mean(), floor);
    c.omega = Eigen::VectorXd::Ones(q);
    c.lambda = Eigen::VectorXd::Constant(q, -0.5);
    c.omega0 = 1.0;
    c.lambda0 = -0.5;
    return c;
}

inline MjghdModel model_from_partition(const Eigen::MatrixXd& data, const std::vector<int>& labels,
                                       const std::vector<int>& q_per_component, double floor) {
    const auto n_comp = static_cast<Eigen::Index>(q_per_component.size());
    MjghdModel model;
    model.weights.resize(n_comp);
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == g) rows.push_back(static_cast<Eigen::Index>(i));
        if (rows.size() < 2) throw FitError("initial partition has a component with fewer than 2 members");
        Eigen::MatrixXd members(static_cast<Eigen::Index>(rows.size()), data.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) members.row(static_cast<Eigen::Index>(k)) = data.row(rows[k]);
        model.components.push_back(component_from_members(members, q_per_component[static_cast<std::size_t>(g)], floor));
        model.weights[g] = static_cast<double>(rows.size()) / static_cast<double>(data.rows());
    }
    return model;
}

/// Random hard partition, then per-component PCA initialization.
inline MjghdModel initialize(const Eigen::MatrixXd& data, int n_components, const std::vector<int>& q_per_component,
                             std::uint64_t seed, double floor = 1e-6) {
    if (n_components < 1 || static_cast<int>(q_per_component.size()) != n_components) {
        throw ParameterError("initialize: need one subspace dimension per component");
    }
    validate_subspace_dims(q_per_component, data.cols());
    if (data.rows() < 2 * n_components) throw ParameterError("initialize: too few observations");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n_components - 1);
    std::vector<int> labels(static_cast<std::size_t>(data.rows()));
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (auto& l : labels) l = pick(rng);
        std::vector<int> counts(static_cast<std::size_t>(n_components), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
        if (*std::min_element(counts.begin(), counts.end()) >= 2) {
            return model_from_partition(data, labels, q_per_component, floor);
        }
    }
    throw FitError("initialize: could not draw a partition with at least 2 members per component");
}

// ---------------------------------------------------------------------------
// Driver

inline std::vector<int> argmax_rows(const Eigen::MatrixXd& zhat) {
    std::vector<int> labels(static_cast<std::size_t>(zhat.rows()));
    for (Eigen::Index i = 0; i < zhat.rows(); ++i) {
        Eigen::Index best = 0;
        zhat.row(i).maxCoeff(&best);
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return labels;
}

/// Seed of start s derived from the fit seed (splitmix64 finalizer).
inline std::uint64_t start_seed(std::uint64_t seed, int start) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(start + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct StartOutcome {
    MjghdModel model;
    LatentExpectations final_expectations;
    std::vector<double> trace;
    bool converged = false;
    int iterations = 0;
    FitDiagnostics diagnostics;
};

inline double row_sum_error(const Eigen::MatrixXd& zhat) {
    return (zhat.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

/// Runs ECM from a given model until convergence or the iteration cap.
inline StartOutcome run_ecm(MjghdModel model, const Eigen::MatrixXd& data, const FitConfig& config) {
    StartOutcome out;
    const EStepOptions full{true, config.param_floor};
    const EStepOptions light{false, config.param_floor};
    LatentExpectations ex = e_step(model, data, full);
    auto note_estep = [&](const LatentExpectations& e) {
        out.diagnostics.worst_row_sum_error = std::max(out.diagnostics.worst_row_sum_error, row_sum_error(e.zhat));
        out.diagnostics.inverse_clamps += e.inverse_clamps;
        out.diagnostics.argument_clamps += e.argument_clamps;
    };
    note_estep(ex);
    out.trace.push_back(ex.loglik);

    for (int it = 0; it < config.max_iterations; ++it) {
        cm_step1(model, ex, data, config, out.diagnostics.flags);
        LatentExpectations mid = e_step(model, data, light);
        note_estep(mid);
        OrientationUpdate orient = cm2_update_orientation(mid, data, model);
        out.diagnostics.flags.svd_failures += orient.svd_failures;
        out.diagnostics.flags.reorthonormalizations += orient.reorthonormalizations;
        out.diagnostics.flags.orientation_rejections += orient.rejections;
        for (Eigen::Index g = 0; g < model.num_components(); ++g) {
            auto& comp = model.components[static_cast<std::size_t>(g)];
            comp.gamma = std::move(orient.gamma[static_cast<std::size_t>(g)]);
            out.diagnostics.worst_orthogonality =
                std::max(out.diagnostics.worst_orthogonality, comp.orthogonality_error());
        }

        ex = e_step(model, data, full);
        note_estep(ex);
        const double prev = out.trace.back();
        const double cur = ex.loglik;
        out.trace.push_back(cur);
        out.iterations = it + 1;
        const double scale = std::max(std::abs(cur), 1e-300);
        out.diagnostics.worst_loglik_drop = std::max(out.diagnostics.worst_loglik_drop, (prev - cur) / scale);
        if (std::abs(cur - prev) < config.loglik_rel_tol * scale) {
            out.converged = true;
            break;
        }
    }
    out.model = std::move(model);
    out.final_expectations = std::move(ex);
    return out;
}

/// Reorders components by descending weight (stable).
inline void canonicalize(FitResult& result) {
    const auto n_comp = result.model.num_components();
    std::vector<int> order(static_cast<std::size_t>(n_comp));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return result.model.weights[a] > result.model.weights[b]; });
    MjghdModel sorted;
    sorted.weights.resize(n_comp);
    Eigen::MatrixXd zhat(result.zhat.rows(), n_comp);
    for (Eigen::Index k = 0; k < n_comp; ++k) {
        const int old = order[static_cast<std::size_t>(k)];
        sorted.weights[k] = result.model.weights[old];
        sorted.components.push_back(result.model.components[static_cast<std::size_t>(old)]);
        zhat.col(k) = result.zhat.col(old);
    }
    result.model = std::move(sorted);
    result.zhat = std::move(zhat);
    result.hard_labels = argmax_rows(result.zhat);
}

/// Multi-start ECM fit; returns the start with the highest final
/// log-likelihood (ties go to the lowest start index).
inline FitResult fit(const Eigen::MatrixXd& data, int n_components, const std::vector<int>& q_per_component,
                     const FitConfig& config) {
    config.validate();
    if (!data.allFinite()) throw ParameterError("fit: data contain non-finite values");
    if (static_cast<int>(q_per_component.size()) != n_components) {
        throw ParameterError("fit: need one subspace dimension per component");
    }
    validate_subspace_dims(q_per_component, data.cols());

    const auto n_starts = static_cast<std::size_t>(config.n_starts);
    std::vector<std::optional<StartOutcome>> outcomes(n_starts);
    std::vector<StartRecord> records(n_starts);

    auto run_one = [&](std::size_t s) {
        StartRecord& rec = records[s];
        rec.start = static_cast<int>(s);
        try {
            MjghdModel init = initialize(data, n_components, q_per_component,
                                         start_seed(config.seed, static_cast<int>(s)), config.param_floor);
            StartOutcome o = run_ecm(std::move(init), data, config);
            rec.succeeded = true;
            rec.final_loglik = o.trace.back();
            rec.iterations = o.iterations;
            outcomes[s] = std::move(o);
        } catch (const Error& e) {
            rec.succeeded = false;
            rec.failure = e.what();
        }
    };

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), n_starts);
    if (workers <= 1) {
        for (std::size_t s = 0; s < n_starts; ++s) run_one(s);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t s = next++; s < n_starts; s = next++) run_one(s);
            });
        }
        for (auto& t : pool) t.join();
    }

    std::optional<std::size_t> best;
    FitDiagnostics merged;
    for (std::size_t s = 0; s < n_starts; ++s) {
        if (!outcomes[s]) continue;
        merged.merge(outcomes[s]->diagnostics);
        if (!best || records[s].final_loglik > records[*best].final_loglik) best = s;
    }
    if (!best) {
        std::ostringstream msg;
        msg << "all " << n_starts << " starts failed:";
        for (const auto& r : records) msg << " [start " << r.start << ": " << r.failure << "]";
        throw FitError(msg.str());
    }

    StartOutcome& win = *outcomes[*best];
    FitResult result;
    result.model = std::move(win.model);
    result.zhat = std::move(win.final_expectations.zhat);
    result.loglik_trace = std::move(win.trace);
    result.converged = win.converged;
    result.n_iterations = win.iterations;
    result.best_start = static_cast<int>(*best);
    result.starts = std::move(records);
    result.diagnostics = merged;
    canonicalize(result);
    return result;
}

}  // namespace mjghd
