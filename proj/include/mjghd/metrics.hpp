#pragma once

// External cluster validation: contingency tables and the adjusted Rand index.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mjghd/errors.hpp"

namespace mjghd::metrics {

/// Counts n_ij with row categories from `truth` and columns from
/// `predicted`, both in ascending order of their distinct values.
template <class A, class B>
struct CrossTab {
    std::vector<A> row_labels;
    std::vector<B> col_labels;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

    [[nodiscard]] std::int64_t total() const { return counts.sum(); }
};

template <class A, class B>
CrossTab<A, B> cross_tabulate(const std::vector<A>& truth, const std::vector<B>& predicted) {
    if (truth.size() != predicted.size()) throw ParameterError("cross_tabulate: partitions differ in length");
    if (truth.empty()) throw ParameterError("cross_tabulate: empty partition");
    std::map<A, Eigen::Index> rows;
    std::map<B, Eigen::Index> cols;
    for (const auto& a : truth) rows.emplace(a, 0);
    for (const auto& b : predicted) cols.emplace(b, 0);
    CrossTab<A, B> out;
    for (auto& [key, idx] : rows) {
        idx = static_cast<Eigen::Index>(out.row_labels.size());
        out.row_labels.push_back(key);
    }
    for (auto& [key, idx] : cols) {
        idx = static_cast<Eigen::Index>(out.col_labels.size());
        out.col_labels.push_back(key);
    }
    out.counts.setZero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < truth.size(); ++i) ++out.counts(rows.at(truth[i]), cols.at(predicted[i]));
    return out;
}

namespace detail {

inline std::uint64_t choose2(std::int64_t k) {
    const auto u = static_cast<std::uint64_t>(k);
    return u * (u - (u > 0 ? 1 : 0)) / 2;
}

}  // namespace detail

/// Hubert-Arabie ARI of a contingency table. Pair counts are accumulated
/// exactly in 64-bit integers; n up to about 6e9 stays exact.
inline double adjusted_rand_index(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts) {
    std::uint64_t sum_cells = 0;
    std::uint64_t sum_rows = 0;
    std::uint64_t sum_cols = 0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        sum_rows += detail::choose2(counts.row(i).sum());
        for (Eigen::Index j = 0; j < counts.cols(); ++j) sum_cells += detail::choose2(counts(i, j));
    }
    for (Eigen::Index j = 0; j < counts.cols(); ++j) sum_cols += detail::choose2(counts.col(j).sum());
    const std::uint64_t pairs = detail::choose2(counts.sum());
    if (pairs == 0) return 1.0;
    // Products of pair counts can exceed 64 bits; long double keeps them exact
    // well past n = 1e6 on x86 (64-bit mantissa covers products below 2^64).
    const long double expected = static_cast<long double>(sum_rows) * static_cast<long double>(sum_cols) /
                                 static_cast<long double>(pairs);
    const long double max_index = 0.5L * (static_cast<long double>(sum_rows) + static_cast<long double>(sum_cols));
    const long double denom = max_index - expected;
    if (denom == 0.0L) return 1.0;  // both partitions trivial (all-one or all-singleton)
    return static_cast<double>((static_cast<long double>(sum_cells) - expected) / denom);
}

template <class A, class B>
double adjusted_rand_index(const std::vector<A>& truth, const std::vector<B>& predicted) {
    return adjusted_rand_index(cross_tabulate(truth, predicted).counts);
}

/// Items off the best one-to-one matching between rows and columns, found by
/// exhaustive search over assignments (tables up to 8 x 8) or greedily beyond.
inline std::int64_t misclassified(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts) {
    const Eigen::Index r = counts.rows();
    const Eigen::Index c = counts.cols();
    const std::int64_t total = counts.sum();
    std::int64_t best = 0;
    if (std::max(r, c) <= 8) {
        std::vector<Eigen::Index> cols(static_cast<std::size_t>(c));
        for (Eigen::Index j = 0; j < c; ++j) cols[static_cast<std::size_t>(j)] = j;
        std::vector<bool> used(static_cast<std::size_t>(c), false);
        auto search = [&](auto&& self, Eigen::Index row, std::int64_t acc) -> void {
            if (row == r) {
                best = std::max(best, acc);
                return;
            }
            self(self, row + 1, acc);  // row left unmatched
            for (Eigen::Index j = 0; j < c; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                used[static_cast<std::size_t>(j)] = true;
                self(self, row + 1, acc + counts(row, j));
                used[static_cast<std::size_t>(j)] = false;
            }
        };
        search(search, 0, 0);
    } else {
        Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> work = counts;
        for (Eigen::Index k = 0; k < std::min(r, c); ++k) {
            Eigen::Index bi = 0, bj = 0;
            const std::int64_t v = work.maxCoeff(&bi, &bj);
            if (v <= 0) break;
            best += v;
            work.row(bi).setConstant(-1);
            work.col(bj).setConstant(-1);
        }
    }
    return total - best;
}

}  // namespace mjghd::metrics
