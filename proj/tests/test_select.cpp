#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mjghd/metrics.hpp"
#include "mjghd/select.hpp"

using namespace mjghd;

TEST(CountParameters, Examples) {
    EXPECT_EQ(select::count_parameters(1, 2, {1}), 11);
    EXPECT_EQ(select::count_parameters(2, 2, {1, 1}), 23);
    // Hand count for p = 13, q = (8, 5, 3): per component 2p + 3q + 3 + pq - q(q+1)/2.
    const long expected = 2 + (26 + 24 + 3 + 104 - 36) + (26 + 15 + 3 + 65 - 15) + (26 + 9 + 3 + 39 - 6);
    EXPECT_EQ(select::count_parameters(3, 13, {8, 5, 3}), expected);
}

TEST(CountParameters, MonotoneAndSymmetric) {
    const int p = 10;
    for (int q = 1; q + 1 < p; ++q) {
        EXPECT_LT(select::count_parameters(1, p, {q}), select::count_parameters(1, p, {q + 1}));
        EXPECT_LT(select::count_parameters(2, p, {q, 3}), select::count_parameters(2, p, {q + 1, 3}));
    }
    for (int g = 1; g < 5; ++g) {
        EXPECT_LT(select::count_parameters(g, p, std::vector<int>(static_cast<std::size_t>(g), 2)),
                  select::count_parameters(g + 1, p, std::vector<int>(static_cast<std::size_t>(g + 1), 2)));
    }
    EXPECT_EQ(select::count_parameters(3, p, {2, 5, 8}), select::count_parameters(3, p, {8, 2, 5}));
    EXPECT_THROW(select::count_parameters(2, p, {2}), ParameterError);
    EXPECT_THROW(select::count_parameters(1, p, {10}), ParameterError);
}

TEST(BicScore, Examples) {
    EXPECT_EQ(select::bic_score(0.0, 0, 1), 0.0);
    EXPECT_NEAR(select::bic_score(-100.0, 10, static_cast<long>(std::round(std::exp(10.0)))), -300.0, 1e-3);
    EXPECT_DOUBLE_EQ(select::bic_score(-100.0, 10, 22026), -200.0 - 10.0 * std::log(22026.0));
    EXPECT_THROW(select::bic_score(0.0, 1, 0), ParameterError);
}

TEST(EnumerateGrid, MultisetsInFixedOrder) {
    select::ModelGrid grid{{2, 1}, {5, 3, 8}, 200, select::SearchMode::ExhaustiveTuples};
    const auto cells = select::enumerate_grid(grid);
    ASSERT_EQ(cells.size(), 3u + 6u);
    EXPECT_EQ(cells[0], (select::GridConfig{1, {8}}));
    EXPECT_EQ(cells[2], (select::GridConfig{1, {3}}));
    EXPECT_EQ(cells[3], (select::GridConfig{2, {8, 8}}));
    EXPECT_EQ(cells[4], (select::GridConfig{2, {8, 5}}));
    EXPECT_EQ(cells[8], (select::GridConfig{2, {3, 3}}));
    EXPECT_EQ(select::enumerate_grid(grid), cells);

    grid.max_configs = 4;
    EXPECT_EQ(select::enumerate_grid(grid).size(), 4u);
    grid.max_configs = 200;
    grid.mode = select::SearchMode::CommonQ;
    const auto common = select::enumerate_grid(grid);
    ASSERT_EQ(common.size(), 6u);
    EXPECT_EQ(common[4], (select::GridConfig{2, {5, 5}}));
}

TEST(EnumerateGrid, ValidatesAgainstDimension) {
    const select::ModelGrid grid{{1}, {3, 6}, 200, select::SearchMode::ExhaustiveTuples};
    EXPECT_THROW(grid.validate(6), ParameterError);
    EXPECT_NO_THROW(grid.validate(7));
    EXPECT_THROW((select::ModelGrid{{0}, {1}, 10, {}}.validate(4)), ParameterError);
    EXPECT_THROW((select::ModelGrid{{}, {1}, 10, {}}.validate(4)), ParameterError);
}

TEST(GridSearch, SingleCell) {
    const Eigen::MatrixXd data = jghd_sample(fixture::example_params(4, 2, 5), 150, 6);
    FitConfig cfg;
    cfg.n_starts = 2;
    cfg.max_iterations = 40;
    const auto result = select::grid_search(data, {{1}, {2}, 200, {}}, cfg);
    ASSERT_EQ(result.ranked.size(), 1u);
    const auto& s = result.ranked[0];
    EXPECT_EQ(s.n_params, select::count_parameters(1, 4, {2}));
    EXPECT_DOUBLE_EQ(s.bic, 2.0 * s.fit.loglik() - static_cast<double>(s.n_params) * std::log(150.0));
}

TEST(GridSearch, SelectsTwoComponentsForSeparatedData) {
    const MjghdModel truth = fixture::separated_model(10, {2, 2}, 6.0, 201);
    const LabelledSample sample = mixture_sample(truth, 500, 202);
    FitConfig cfg;
    cfg.n_starts = 3;
    cfg.max_iterations = 150;
    const auto result = select::grid_search(sample.data, {{1, 2, 3}, {2}, 200, {}}, cfg);
    ASSERT_FALSE(result.ranked.empty());
    EXPECT_EQ(result.ranked.front().config.n_components, 2);
    for (std::size_t k = 1; k < result.ranked.size(); ++k) {
        EXPECT_GE(result.ranked[k - 1].bic, result.ranked[k].bic);
    }
    for (const auto& s : result.ranked) {
        EXPECT_DOUBLE_EQ(s.bic, select::bic_score(s.fit.loglik(), s.n_params, 500));
    }
    EXPECT_EQ(result.ranked.size() + result.failures.size(), 3u);
}

TEST(GridSearch, FailedCellsAreRecorded) {
    // Five rows cannot host three components of two members each.
    const Eigen::MatrixXd data = jghd_sample(fixture::example_params(3, 1, 7), 5, 8);
    FitConfig cfg;
    cfg.n_starts = 1;
    cfg.max_iterations = 5;
    const auto result = select::grid_search(data, {{1, 3}, {1}, 200, {}}, cfg);
    ASSERT_EQ(result.failures.size(), 1u);
    EXPECT_EQ(result.failures[0].config.n_components, 3);
    EXPECT_THROW(select::grid_search(data, {{3}, {1}, 200, {}}, cfg), FitError);
}
