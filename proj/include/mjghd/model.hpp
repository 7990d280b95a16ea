#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mjghd/errors.hpp"
#include "mjghd/jghd.hpp"

namespace mjghd {

/// Finite mixture of JGHD components with component-specific subspace
/// dimensions.
struct MjghdModel {
    Eigen::VectorXd weights;
    std::vector<JghdParams> components;

    [[nodiscard]] Eigen::Index num_components() const { return weights.size(); }
    [[nodiscard]] Eigen::Index dim() const { return components.empty() ? 0 : components.front().dim(); }

    [[nodiscard]] std::vector<int> subspace_dims() const {
        std::vector<int> out;
        out.reserve(components.size());
        for (const auto& c : components) out.push_back(static_cast<int>(c.q()));
        return out;
    }

    void validate() const {
        if (components.empty() || static_cast<Eigen::Index>(components.size()) != weights.size()) {
            throw ParameterError("MjghdModel: need one weight per component");
        }
        if (!((weights.array() > 0.0).all()) || std::abs(weights.sum() - 1.0) > 1e-12) {
            throw ParameterError("MjghdModel: weights must be positive and sum to 1");
        }
        for (const auto& c : components) {
            c.validate();
            if (c.dim() != dim()) throw ParameterError("MjghdModel: components disagree on dimension");
        }
    }
};

/// log sum_i exp(v_i), safe for very negative inputs.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// Observed-data log-likelihood of an n x p data matrix.
inline double mixture_log_likelihood(const MjghdModel& model, const Eigen::MatrixXd& data) {
    const auto n_comp = model.num_components();
    Eigen::MatrixXd terms(data.rows(), n_comp);
    for (Eigen::Index g = 0; g < n_comp; ++g) {
        const auto& comp = model.components[static_cast<std::size_t>(g)];
        const Eigen::MatrixXd rotated = data * comp.gamma;
        const double log_w = std::log(model.weights[g]);
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            terms(i, g) = log_w + jghd_log_density_rotated(comp, rotated.row(i).transpose());
        }
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) total += log_sum_exp(terms.row(i).transpose());
    return total;
}

struct LabelledSample {
    Eigen::MatrixXd data;
    std::vector<int> labels;  // 0-based component of each row
};

/// Draws n rows: the component by its weight, then a JGHD draw from it.
inline LabelledSample mixture_sample(const MjghdModel& model, std::size_t n, std::uint64_t seed) {
    model.validate();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick(model.weights.data(), model.weights.data() + model.weights.size());
    LabelledSample out{Eigen::MatrixXd(static_cast<Eigen::Index>(n), model.dim()), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const int g = pick(rng);
        out.labels[i] = g;
        out.data.row(static_cast<Eigen::Index>(i)) =
            jghd_draw(model.components[static_cast<std::size_t>(g)], rng).transpose();
    }
    return out;
}

}  // namespace mjghd
