#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "silab/homogeneity.hpp"
#include "silab/losses.hpp"

using namespace silab;

namespace {

std::vector<double> symmetric_matrix(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) a[i * d + j] = a[j * d + i] = u(rng);
    return a;
}

// 0.5 |x|^2: Hessian is the identity everywhere, so the smoothness constant
// on any sphere is exactly 1.
class HalfSquaredNorm : public StochasticLoss {
  public:
    explicit HalfSquaredNorm(std::size_t d) : d_(d) {}
    std::size_t dim() const override { return d_; }
    bool scale_invariant() const override { return false; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override {
        Grad g;
        g.grad.assign(x.begin(), x.end());
        for (double v : x) g.loss += 0.5 * v * v;
        return g;
    }

  private:
    std::size_t d_;
};

const std::vector<double> kScales{1e-3, 0.25, 3.0, 1e3};

}  // namespace

TEST_CASE("check_homogeneity separates true and false degree claims") {
    auto sqnorm = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::vector<double>{s};
    };
    CHECK(check_homogeneity(sqnorm, 5, 2.0, kScales, 20, 1).pass);
    auto wrong = check_homogeneity(sqnorm, 5, 1.0, kScales, 20, 1);
    CHECK_FALSE(wrong.pass);
    CHECK(wrong.max_rel_error > 1.0);
    CHECK_FALSE(wrong.detail.empty());

    auto constant = [](std::span<const double>) { return std::vector<double>{3.5}; };
    CHECK(check_homogeneity(constant, 5, 0.0, kScales, 20, 2).pass);

    // vector-valued: normalization to the unit sphere is degree 0
    auto unit = [](std::span<const double> x) {
        double n = 0.0;
        for (double v : x) n += v * v;
        n = std::sqrt(n);
        std::vector<double> out(x.begin(), x.end());
        for (double& v : out) v /= n;
        return out;
    };
    CHECK(check_homogeneity(unit, 4, 0.0, kScales, 20, 3).pass);
}

TEST_CASE("gradient degree audit on the loss families") {
    SUBCASE("rayleigh: degree 0 loss, degree -1 gradient, Euler zero") {
        RayleighLoss loss(5, symmetric_matrix(5, 4));
        auto rep = check_gradient_degree(loss, 0.0, kScales, 20, 5);
        CHECK(rep.pass);
        CHECK(rep.n_checked > 0);
    }
    SUBCASE("matrix factorization of the zero target: degree 4") {
        MatFacLoss loss(2, 3, std::vector<double>(4, 0.0));
        CHECK(check_gradient_degree(loss, 4.0, kScales, 20, 6, 1e-8).pass);
    }
    SUBCASE("a wrong degree claim fails") {
        RayleighLoss loss(5, symmetric_matrix(5, 4));
        CHECK_FALSE(check_gradient_degree(loss, 2.0, kScales, 20, 5).pass);
    }
}

TEST_CASE("equivalent-scaling correspondences hold step by step") {
    std::mt19937_64 rng(8);
    auto x0 = random_unit_vector(6, rng);
    for (auto& v : x0) v *= 1.4;

    SUBCASE("deterministic rayleigh, both modes, several scales") {
        RayleighLoss loss(6, symmetric_matrix(6, 7));
        for (double c : {0.1, 3.0, 50.0}) {
            CHECK(check_equivalent_scaling(loss, x0, 0.01, 0.05, c, 80, 1,
                                           ScalingMode::kLossRescale)
                      .pass);
            CHECK(check_equivalent_scaling(loss, x0, 0.01, 0.05, c, 80, 1,
                                           ScalingMode::kInitRescale)
                      .pass);
        }
    }
    SUBCASE("stochastic rayleigh replays the same gamma sequence") {
        StochasticRayleigh loss(6, symmetric_matrix(6, 9), 0.25);
        CHECK(check_equivalent_scaling(loss, x0, 0.005, 0.02, 10.0, 60, 2,
                                       ScalingMode::kLossRescale)
                  .pass);
        CHECK(check_equivalent_scaling(loss, x0, 0.005, 0.02, 10.0, 60, 2,
                                       ScalingMode::kInitRescale)
                  .pass);
    }
}

TEST_CASE("estimate_rho is exact on a quadratic bowl") {
    HalfSquaredNorm loss(5);
    // Hessian = I: the raw estimate is 1, widened by 10% to 1.1.
    CHECK(estimate_rho(loss, 10, 30, 3) == doctest::Approx(1.1).epsilon(2e-3));
    CHECK(estimate_rho(loss, 10, 30, 3, 7.5) == doctest::Approx(1.1).epsilon(2e-3));
}

TEST_CASE("sphere gradients stay below pi rho") {
    RayleighLoss loss(4, symmetric_matrix(4, 12));
    const double rho = estimate_rho(loss, 24, 30, 13);
    CHECK(check_gradient_bounds(loss, rho, 200, 14).pass);
    // an absurdly small rho must fail the bound
    CHECK_FALSE(check_gradient_bounds(loss, 1e-9, 200, 14).pass);
}
