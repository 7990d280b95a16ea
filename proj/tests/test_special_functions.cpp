#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mjghd/special_functions.hpp"
#include "checks.hpp"
#include "oracles.hpp"

using namespace mjghd;

TEST(LogBesselK, HalfOrderClosedForm) {
    // K_{1/2}(z) = sqrt(pi / (2 z)) e^{-z}
    for (double z : {1e-6, 0.01, 0.5, 1.0, 2.0, 7.5, 30.0, 500.0, 1e4}) {
        const double expected = 0.5 * std::log(std::numbers::pi / (2.0 * z)) - z;
        EXPECT_NEAR(special::log_bessel_k(0.5, z), expected, 1e-12 * std::max(1.0, std::abs(expected))) << z;
    }
    EXPECT_NEAR(std::exp(special::log_bessel_k(0.5, 1.0)), 0.4610685044478946, 1e-15);
}

TEST(LogBesselK, OrderSymmetryIsExact) {
    for (double nu : {0.0, 0.3, 0.5, 1.7, 4.0, 12.25, 150.0}) {
        for (double z : {1e-6, 0.1, 1.9, 2.1, 24.0, 26.0, 1e3}) {
            EXPECT_EQ(special::log_bessel_k(nu, z), special::log_bessel_k(-nu, z)) << nu << " " << z;
        }
    }
}

TEST(LogBesselK, MatchesIntegralRepresentation) {
    double worst = 0.0;
    for (double nu : {0.0, 0.2, 0.5, 1.0, 2.3, 5.5, 10.0, 37.0, 200.0}) {
        for (double z : {1e-6, 1e-3, 0.1, 1.0, 1.99, 2.01, 5.0, 24.9, 25.1, 100.0, 1e3, 1e4}) {
            const double ref = oracle::log_bessel_k(nu, z);
            const double got = special::log_bessel_k(nu, z);
            const double rel = std::abs(got - ref) / std::max(1.0, std::abs(ref));
            worst = std::max(worst, rel);
            EXPECT_LT(rel, 1e-12) << "nu=" << nu << " z=" << z << " got " << got << " ref " << ref;
        }
    }
    RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(LogBesselK, KZeroAtOne) {
    EXPECT_NEAR(special::log_bessel_k(0.0, 1.0), oracle::log_bessel_k(0.0, 1.0), 1e-13);
    EXPECT_NEAR(std::exp(special::log_bessel_k(0.0, 1.0)), 0.42102443824070834, 1e-15);
}

TEST(LogBesselK, DomainAndRange) {
    EXPECT_THROW(special::log_bessel_k(1.0, 0.0), DomainError);
    EXPECT_THROW(special::log_bessel_k(1.0, -2.0), DomainError);
    EXPECT_THROW(special::log_bessel_k(1.0, std::nan("")), DomainError);
    EXPECT_THROW(special::log_bessel_k(1.0, 1e-13), RangeError);
    EXPECT_THROW(special::log_bessel_k(1.0, 2e6), RangeError);
    EXPECT_THROW(special::log_bessel_k(2e5, 1.0), RangeError);
    EXPECT_NO_THROW(special::log_bessel_k(1.0, special::kMinArgument));
    EXPECT_NO_THROW(special::log_bessel_k(1.0, special::kMaxArgument));
}

TEST(LogBesselK, RecurrenceResidual) {
    // Residual of the three-term recurrence divided by the largest term,
    // K_{|nu|+1}; for nu >= 0 this is the residual relative to K_{nu+1}.
    const double worst = check::bessel_recurrence_worst();
    EXPECT_LT(worst, 1e-10);
    RecordProperty("worst_residual", std::to_string(worst));
}

TEST(LogBesselKRatio, SymmetricOrders) {
    for (double z : {0.01, 1.0, 50.0}) EXPECT_EQ(special::log_bessel_k_ratio(0.5, -0.5, z), 0.0);
}

TEST(LogBesselKRatio, ThreeHalvesOverHalf) {
    // K_{3/2}(z) = K_{1/2}(z) (1 + 1/z)
    EXPECT_NEAR(special::log_bessel_k_ratio(1.5, 0.5, 2.0), std::log(1.5), 1e-14);
}

TEST(LogBesselKRatio, NonIntegerGap) {
    const double ref = oracle::log_bessel_k(2.3, 5.0) - oracle::log_bessel_k(0.7, 5.0);
    EXPECT_NEAR(special::log_bessel_k_ratio(2.3, 0.7, 5.0), ref, 1e-12);
}

TEST(LogBesselKRatio, StableAtExtremeArguments) {
    // Both logs are about -1e5 here; the ratio must stay accurate.
    const double z = 1e5;
    const double ratio = special::log_bessel_k_ratio(3.0, 2.0, z);
    // Large-z expansion: K_{nu+1}/K_nu = 1 + (2 nu + 1)/(2 z) + O(1/z^2)
    EXPECT_NEAR(ratio, std::log1p(5.0 / (2.0 * z)), 1e-9);
}

TEST(ScaledSequence, AgreesWithSingleEvaluations) {
    for (double nu : {-3.7, -1.5, -0.4, 0.0, 0.6, 4.2}) {
        for (double z : {0.05, 3.0, 40.0}) {
            const auto seq = special::log_bessel_k_scaled_sequence<4>(nu, z);
            for (int k = 0; k < 4; ++k) {
                EXPECT_NEAR(seq[static_cast<std::size_t>(k)], special::log_bessel_k_scaled(nu + k, z),
                            1e-12 * std::max(1.0, std::abs(seq[static_cast<std::size_t>(k)])))
                    << nu << " " << z << " " << k;
            }
        }
    }
}

TEST(DlogkDorder, ZeroAtOrderZero) {
    for (double z : {1e-4, 0.3, 2.0, 80.0}) EXPECT_EQ(special::dlogk_dorder(0.0, z), 0.0);
}

TEST(DlogkDorder, OddInOrder) {
    EXPECT_EQ(special::dlogk_dorder(-1.2, 3.0), -special::dlogk_dorder(1.2, 3.0));
}

TEST(DlogkDorder, MatchesQuadratureDerivative) {
    for (double nu : {0.1, 0.5, 1.2, 3.3, 9.0, 60.0}) {
        for (double z : {1e-3, 0.2, 3.0, 20.0, 300.0}) {
            const double ref = oracle::dlogk_dorder(nu, z);
            const double got = special::dlogk_dorder(nu, z);
            EXPECT_LT(std::abs(got - ref), 1e-8 * std::max(1.0, std::abs(ref))) << nu << " " << z;
        }
    }
}
