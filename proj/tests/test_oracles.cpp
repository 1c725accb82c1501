#include <doctest.h>

#include <cmath>
#include <vector>

#include "eslm/error.hpp"
#include "eslm/rng.hpp"
#include "support/oracles.hpp"

using namespace eslm;

TEST_CASE("finite differences recover the gradient of a closed-form quadratic") {
    const auto f = [](std::span<const double> x) { return -(x[0] * x[0] + x[1] * x[1]); };
    const std::vector<double> theta = {1.0, 2.0};
    const auto grad = oracle::finite_diff_gradient(f, theta, 1e-4);
    CHECK(grad[0] == doctest::Approx(-2.0).epsilon(1e-4));
    CHECK(grad[1] == doctest::Approx(-4.0).epsilon(1e-4));
}

TEST_CASE("finite differences of a linear function are constant in theta") {
    const auto f = [](std::span<const double> x) { return 3.0 * x[0] - 2.0 * x[1] + 7.0; };
    const auto g1 = oracle::finite_diff_gradient(f, std::vector<double>{0.0, 0.0}, 1e-5);
    const auto g2 = oracle::finite_diff_gradient(f, std::vector<double>{5.0, -3.0}, 1e-5);
    CHECK(g1[0] == doctest::Approx(g2[0]).epsilon(1e-7));
    CHECK(g1[1] == doctest::Approx(g2[1]).epsilon(1e-7));
    CHECK(g1[0] == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("finite differences align with analytic gradients on random quadratics") {
    GaussianStream stream(313);
    for (int trial = 0; trial < 10; ++trial) {
        const int dim = 12;
        std::vector<float> raw(static_cast<size_t>(dim) * dim + dim);
        stream.fill(static_cast<uint64_t>(trial) * 4096, raw);
        // A = B^T B + I (positive definite), theta random.
        std::vector<std::vector<double>> a(dim, std::vector<double>(dim, 0.0));
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                for (int k = 0; k < dim; ++k) {
                    a[i][j] += static_cast<double>(raw[k * dim + i]) * raw[k * dim + j];
                }
            }
            a[i][i] += 1.0;
        }
        std::vector<double> theta(dim);
        for (int i = 0; i < dim; ++i) {
            theta[i] = raw[dim * dim + i];
        }
        const auto f = [&](std::span<const double> x) {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) {
                for (int j = 0; j < dim; ++j) {
                    s += x[i] * a[i][j] * x[j];
                }
            }
            return -s;
        };
        const auto numeric = oracle::finite_diff_gradient(f, theta, 1e-5);
        std::vector<double> analytic(dim, 0.0);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                analytic[i] -= 2.0 * a[i][j] * theta[j];
            }
        }
        REQUIRE(oracle::cosine(numeric, analytic) > 0.999);
    }
}

TEST_CASE("finite differences enforce the oracle-scale guards") {
    const auto f = [](std::span<const double>) { return 0.0; };
    const std::vector<double> big(201, 0.0);
    CHECK_THROWS_AS(oracle::finite_diff_gradient(f, big, 1e-4), std::invalid_argument);
    const std::vector<double> ok(2, 0.0);
    CHECK_THROWS_AS(oracle::finite_diff_gradient(f, ok, 0.0), std::invalid_argument);
}

TEST_CASE("exhaustive subset mean basics") {
    // subset value = mean of fixed per-item scores; the exhaustive mean over
    // all m-subsets must equal the overall mean for every m.
    const std::vector<double> scores = {0.5, -1.25, 2.0, 0.0, 3.5, -0.75};
    double overall = 0.0;
    for (const double s : scores) overall += s;
    overall /= static_cast<double>(scores.size());
    const auto subset_value = [&](std::span<const size_t> subset) {
        double s = 0.0;
        for (const size_t i : subset) s += scores[i];
        return s / static_cast<double>(subset.size());
    };
    SUBCASE("m = n is the single full subset") {
        CHECK(oracle::exhaustive_subset_mean(6, 6, subset_value) ==
              doctest::Approx(overall).epsilon(1e-12));
    }
    SUBCASE("m = 1 averages the per-item values") {
        CHECK(oracle::exhaustive_subset_mean(6, 1, subset_value) ==
              doctest::Approx(overall).epsilon(1e-12));
    }
    SUBCASE("m = 2 and m = 3 stay unbiased") {
        CHECK(oracle::exhaustive_subset_mean(6, 2, subset_value) ==
              doctest::Approx(overall).epsilon(1e-12));
        CHECK(oracle::exhaustive_subset_mean(6, 3, subset_value) ==
              doctest::Approx(overall).epsilon(1e-12));
    }
    SUBCASE("combinatorial guard") {
        CHECK_THROWS_AS(oracle::exhaustive_subset_mean(
                            100, 50, [](std::span<const size_t>) { return 0.0; }),
                        ConfigError);
    }
}

TEST_CASE("scalar reward oracle trivial cases") {
    SUBCASE("uniform logits give -log V") {
        const std::vector<std::vector<double>> logits(4, std::vector<double>(5, 0.0));
        const std::vector<int32_t> ids = {0, 1, 2, 3};
        const std::vector<uint8_t> mask = {1, 1, 1, 1};
        CHECK(oracle::scalar_reward(logits, ids, mask) ==
              doctest::Approx(-std::log(5.0)).epsilon(1e-12));
    }
    SUBCASE("single unmasked label gives a single-term mean") {
        std::vector<std::vector<double>> logits(3, std::vector<double>(4, 0.0));
        logits[1][2] = 1.0;  // only scored pair is (1 -> 2); label logit 1, rest 0
        const std::vector<int32_t> ids = {0, 1, 2};
        const std::vector<uint8_t> mask = {0, 0, 1};
        const double denom = 3.0 * std::exp(0.0) + std::exp(1.0);
        CHECK(oracle::scalar_reward(logits, ids, mask) ==
              doctest::Approx(1.0 - std::log(denom)).epsilon(1e-12));
    }
}

TEST_CASE("matmul oracle cross-checks itself on the identity") {
    const std::vector<float> eye = {1.0f, 0.0f, 0.0f, 1.0f};
    const std::vector<float> b = {3.0f, 4.0f, 5.0f, 6.0f};
    const auto out = oracle::matmul_naive(eye, 2, 2, b, 2);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 4.0);
    CHECK(out[2] == 5.0);
    CHECK(out[3] == 6.0);
}
