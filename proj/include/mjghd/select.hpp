#pragma once

// BIC, free-parameter counting and grid search over G and subspace dimensions.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mjghd/ecm.hpp"
#include "mjghd/errors.hpp"

namespace mjghd::select {

/// Per component: mu (p), beta (p), phi (q), b, Omega (q), lambda (q),
/// omega0, lambda0, plus the Stiefel dimension p q - q (q + 1) / 2 of the
/// q-frame; G - 1 free weights.
inline long count_parameters(int n_components, int p, const std::vector<int>& q_per_component) {
    if (n_components < 1 || static_cast<int>(q_per_component.size()) != n_components || p < 2) {
        throw ParameterError("count_parameters: invalid dimensions");
    }
    long total = n_components - 1;
    for (int q : q_per_component) {
        if (q < 1 || q >= p) throw ParameterError("count_parameters: need 0 < q < p");
        total += 2L * p + 3L * q + 3L + static_cast<long>(p) * q - static_cast<long>(q) * (q + 1) / 2;
    }
    return total;
}

inline double bic_score(double loglik, long n_params, long n) {
    if (n < 1) throw ParameterError("bic_score: n must be >= 1");
    return 2.0 * loglik - static_cast<double>(n_params) * std::log(static_cast<double>(n));
}

enum class SearchMode { ExhaustiveTuples, CommonQ };

struct ModelGrid {
    std::vector<int> g_values;
    std::vector<int> q_candidates;
    int max_configs = 200;
    SearchMode mode = SearchMode::ExhaustiveTuples;

    void validate(Eigen::Index p) const {
        if (g_values.empty() || q_candidates.empty()) throw ParameterError("ModelGrid: empty grid");
        for (int g : g_values)
            if (g < 1) throw ParameterError("ModelGrid: G values must be >= 1");
        for (int q : q_candidates)
            if (q < 1 || q >= p) throw ParameterError("ModelGrid: q candidates must satisfy 0 < q < p");
        if (max_configs < 1) throw ParameterError("ModelGrid: max_configs must be >= 1");
    }
};

struct GridConfig {
    int n_components = 1;
    std::vector<int> q;  // non-increasing

    bool operator==(const GridConfig&) const = default;
};

/// Configurations in a fixed order: G ascending, then q-multisets written as
/// non-increasing tuples in lexicographic order of the sorted candidates.
/// Truncated at max_configs.
inline std::vector<GridConfig> enumerate_grid(const ModelGrid& grid) {
    const std::set<int> g_set(grid.g_values.begin(), grid.g_values.end());
    const std::set<int> q_set(grid.q_candidates.begin(), grid.q_candidates.end());
    const std::vector<int> qs(q_set.rbegin(), q_set.rend());  // descending
    std::vector<GridConfig> out;
    const auto cap = static_cast<std::size_t>(grid.max_configs);
    for (int g : g_set) {
        if (grid.mode == SearchMode::CommonQ) {
            for (auto it = q_set.begin(); it != q_set.end() && out.size() < cap; ++it) {
                out.push_back({g, std::vector<int>(static_cast<std::size_t>(g), *it)});
            }
            continue;
        }
        std::vector<int> current;
        std::function<void(std::size_t)> rec = [&](std::size_t from) {
            if (out.size() >= cap) return;
            if (static_cast<int>(current.size()) == g) {
                out.push_back({g, current});
                return;
            }
            for (std::size_t k = from; k < qs.size(); ++k) {
                current.push_back(qs[k]);
                rec(k);
                current.pop_back();
            }
        };
        rec(0);
    }
    return out;
}

struct ScoredFit {
    GridConfig config;
    FitResult fit;
    double bic = 0.0;
    long n_params = 0;
};

struct FailedConfig {
    GridConfig config;
    std::string reason;
};

struct GridResult {
    std::vector<ScoredFit> ranked;  // bic descending
    std::vector<FailedConfig> failures;
};

/// Fits every grid cell with the same FitConfig (so the same seed) and ranks
/// by BIC. Ties keep enumeration order.
inline GridResult grid_search(const Eigen::MatrixXd& data, const ModelGrid& grid, const FitConfig& config) {
    grid.validate(data.cols());
    config.validate();
    const std::vector<GridConfig> cells = enumerate_grid(grid);
    GridResult out;
    for (const auto& cell : cells) {
        try {
            ScoredFit s;
            s.config = cell;
            s.fit = fit(data, cell.n_components, cell.q, config);
            s.n_params = count_parameters(cell.n_components, static_cast<int>(data.cols()), cell.q);
            s.bic = bic_score(s.fit.loglik(), s.n_params, static_cast<long>(data.rows()));
            out.ranked.push_back(std::move(s));
        } catch (const FitError& e) {
            out.failures.push_back({cell, e.what()});
        }
    }
    if (out.ranked.empty()) throw FitError("grid_search: every configuration failed");
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const ScoredFit& a, const ScoredFit& b) { return a.bic > b.bic; });
    return out;
}

}  // namespace mjghd::select
