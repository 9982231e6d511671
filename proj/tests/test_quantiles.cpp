#include "bdrvi/quantiles.hpp"
#include "bdrvi/types.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <doctest.h>

using namespace bdrvi;

TEST_CASE("tail_quantile examples") {
    CHECK(tail_quantile(TailDistribution::Normal, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(tail_quantile(TailDistribution::Normal, 0.975) - 1.959964) < 1e-5);
    CHECK(std::abs(tail_quantile(TailDistribution::ChiSquare, 0.95, 19.0) - 30.1435) < 1e-3);
    CHECK_THROWS_AS(tail_quantile(TailDistribution::Normal, 0.0), InvalidArgument);
    CHECK_THROWS_AS(tail_quantile(TailDistribution::Normal, 1.0), InvalidArgument);
}

TEST_CASE("normal quantile and cdf agree with Boost") {
    const boost::math::normal_distribution<double> z;
    for (double p = 1e-6; p < 1.0; p += 0.00731) {
        CHECK(std::abs(normal_quantile(p) - boost::math::quantile(z, p)) < 1e-9);
    }
    for (double p : {1e-12, 1e-9, 1.0 - 1e-9}) CHECK(std::abs(normal_quantile(p) - boost::math::quantile(z, p)) < 1e-8);
    for (double x = -8.0; x <= 8.0; x += 0.173) CHECK(std::abs(normal_cdf(x) - boost::math::cdf(z, x)) < 1e-14);
}

TEST_CASE("chi-square agrees with Boost") {
    for (double df : {1.0, 2.0, 5.5, 19.0, 199.0, 2999.0}) {
        const boost::math::chi_squared_distribution<double> chi(df);
        for (double p : {0.01, 0.05, 0.5, 0.9, 0.95, 0.99}) {
            const double ref = boost::math::quantile(chi, p);
            CHECK(std::abs(chi_square_quantile(df, p) - ref) <= 1e-8 * std::max(1.0, ref));
            CHECK(std::abs(chi_square_cdf(df, ref) - p) < 1e-11);
        }
        for (double x : {0.1, 1.0, 7.3, 40.0})
            CHECK(std::abs(regularized_gamma_p(0.5 * df, x) - boost::math::gamma_p(0.5 * df, x)) < 1e-12);
    }
}
