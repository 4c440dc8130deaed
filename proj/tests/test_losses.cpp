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

// Central finite differences of the mean loss.
std::vector<double> fd_grad(const StochasticLoss& loss, std::vector<double> x,
                            double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = loss.mean_eval(x).loss;
        x[i] = xi - h;
        const double fm = loss.mean_eval(x).loss;
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

void check_grad_vs_fd(const StochasticLoss& loss, const std::vector<double>& x,
                      double tol = 1e-5) {
    const Grad g = loss.mean_eval(x);
    const auto fd = fd_grad(loss, x);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(g.grad[i] - fd[i]) <= tol * (std::abs(fd[i]) + 1e-3) + 1e-8);
}

double euler_residual(const StochasticLoss& loss, std::uint64_t gamma,
                      const std::vector<double>& x) {
    const Grad g = loss.eval(gamma, x);
    double dot = 0.0, gn = 0.0, xn = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += g.grad[i] * x[i];
        gn += g.grad[i] * g.grad[i];
        xn += x[i] * x[i];
    }
    return std::abs(dot) / (std::sqrt(gn) * std::sqrt(xn) + 1e-30);
}

}  // namespace

TEST_CASE("scale-invariant families satisfy the Euler identity <grad, x> = 0") {
    std::mt19937_64 rng(11);
    RayleighLoss ray(4, symmetric_matrix(4, 1));
    AngleLoss ang(1.0);
    StochasticRayleigh sray(4, symmetric_matrix(4, 2), 0.3);
    MultigroupLoss multi(3, symmetric_matrix(3, 3), 4, symmetric_matrix(4, 4));
    const StochasticLoss* losses[] = {&ray, &ang, &sray, &multi};
    for (const StochasticLoss* loss : losses) {
        for (int rep = 0; rep < 20; ++rep) {
            auto x = random_unit_vector(loss->dim(), rng);
            std::uniform_real_distribution<double> s(0.1, 10.0);
            const double r = s(rng);
            for (auto& v : x) v *= r;
            CHECK(euler_residual(*loss, rep, x) <= 1e-10);
        }
    }
}

TEST_CASE("analytic gradients match finite differences") {
    std::mt19937_64 rng(13);
    SUBCASE("rayleigh") {
        RayleighLoss loss(5, symmetric_matrix(5, 7));
        for (int rep = 0; rep < 5; ++rep)
            check_grad_vs_fd(loss, random_unit_vector(5, rng));
    }
    SUBCASE("angle") {
        AngleLoss loss(1.7);
        check_grad_vs_fd(loss, {0.8, 0.6});
        check_grad_vs_fd(loss, {2.0, -1.0});
        check_grad_vs_fd(loss, {0.1, 3.0});
    }
    SUBCASE("product logistic") {
        ProductLogisticLoss loss({{1, 1}, {1, 1}, {1, 1}, {1, -1}}, 2);
        check_grad_vs_fd(loss, {1.1, 0.9, 1.2, 0.8});
        check_grad_vs_fd(loss, {0.5, 2.0, 1.0, 1.5});
    }
    SUBCASE("matrix factorization") {
        MatFacLoss loss(2, 2, {1.0, 0.0, 0.0, 1.0});
        check_grad_vs_fd(loss, {0.3, -0.2, 0.7, 0.4, 0.1, 0.9, -0.5, 0.2});
    }
    SUBCASE("stochastic rayleigh at a fixed sample") {
        StochasticRayleigh loss(4, symmetric_matrix(4, 9), 0.5);
        RayleighLoss fixed(4, loss.sample_matrix(42));
        auto x = random_unit_vector(4, rng);
        const Grad a = loss.eval(42, x);
        const Grad b = fixed.mean_eval(x);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(a.grad[i] == doctest::Approx(b.grad[i]).epsilon(1e-12));
    }
    SUBCASE("multigroup") {
        MultigroupLoss loss(3, symmetric_matrix(3, 15), 3, symmetric_matrix(3, 16));
        check_grad_vs_fd(loss, random_unit_vector(6, rng));
    }
}

TEST_CASE("homogeneity degrees of the loss families") {
    const std::vector<double> scales{1e-3, 0.5, 2.0, 1e3};
    SUBCASE("rayleigh is degree 0 with a degree -1 gradient") {
        RayleighLoss loss(4, symmetric_matrix(4, 21));
        auto rep = check_gradient_degree(loss, 0.0, scales, 25, 5, 1e-9);
        CHECK(rep.pass);
    }
    SUBCASE("matrix factorization with zero target is degree 4") {
        MatFacLoss loss(2, 2, std::vector<double>(4, 0.0));
        auto rep = check_gradient_degree(loss, 4.0, scales, 25, 6, 1e-8);
        CHECK(rep.pass);
    }
    SUBCASE("the inner product of the logistic loss is degree 2k") {
        ProductLogisticLoss loss({{1, 1}, {1, -1}}, 3);
        auto f = [&](std::span<const double> x) {
            return std::vector<double>{loss.product(x)};
        };
        CHECK(check_homogeneity(f, 6, 6.0, scales, 25, 7, 1e-9).pass);
    }
}

TEST_CASE("product logistic outer loss on the 3-vs-1 data") {
    ProductLogisticLoss loss({{1, 1}, {1, 1}, {1, 1}, {1, -1}}, 2);
    // L~'(X) = -3 sigmoid(-X) + sigmoid(X) vanishes at X = ln 3
    CHECK(loss.minimizer() == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    CHECK(std::abs(loss.outer_loss_deriv(std::log(3.0))) <= 1e-12);
    CHECK(loss.outer_loss_deriv(2.0) ==
          doctest::Approx(-3.0 / (1.0 + std::exp(2.0)) + 1.0 / (1.0 + std::exp(-2.0)))
              .epsilon(1e-12));
    CHECK(loss.product(std::vector<double>{1.0, 2.0, 3.0, 0.5}) == doctest::Approx(3.0));
}

TEST_CASE("rank-one matrix factorization gradients are (a b^2, a^2 b)") {
    MatFacLoss loss(1, 1, {0.0});
    const double a = 1.3, b = -0.7;
    const Grad g = loss.mean_eval(std::vector<double>{a, b});
    CHECK(g.loss == doctest::Approx(0.5 * a * a * b * b).epsilon(1e-14));
    CHECK(g.grad[0] == doctest::Approx(a * b * b).epsilon(1e-14));
    CHECK(g.grad[1] == doctest::Approx(a * a * b).epsilon(1e-14));
}

TEST_CASE("stochastic rayleigh is a deterministic function of gamma") {
    StochasticRayleigh loss(5, symmetric_matrix(5, 31), 0.4, 0.1, 30.0);
    std::mt19937_64 rng(3);
    auto x = random_unit_vector(5, rng);
    const Grad a = loss.eval(1234, x);
    const Grad b = loss.eval(1234, x);
    CHECK(a.loss == b.loss);
    CHECK(a.grad == b.grad);
    CHECK(loss.eval(1235, x).loss != a.loss);

    auto m = loss.sample_matrix(99);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(m[i * 5 + j] == m[j * 5 + i]);
}

TEST_CASE("profile of the angle loss recovers its exact constants") {
    // grad norm is exactly sigma/|x|, Hessian eigenvalues +-sigma/|x|^2, so on
    // the unit sphere every constant equals sigma before the 10% widening.
    AngleLoss loss(1.0);
    const LossProfile p = profile_loss(loss, 8, 4, 17);
    CHECK(p.m_max == doctest::Approx(1.1).epsilon(1e-6));
    CHECK(p.sigma_lo2 <= 1.0);
    CHECK(p.sigma_hi2 >= 1.0);
    CHECK(p.sigma_lo2 >= 0.5);
    CHECK(p.sigma_hi2 <= 2.0);
    CHECK(p.rho == doctest::Approx(1.1).epsilon(0.02));
}

TEST_CASE("estimated rho of a 2-d rayleigh matches a dense grid oracle") {
    const auto a = symmetric_matrix(2, 41);
    RayleighLoss loss(2, a);
    // oracle: max spectral norm of the finite-difference Hessian over a fine
    // sweep of the unit circle
    double oracle = 0.0;
    const double h = 1e-5;
    for (int s = 0; s < 720; ++s) {
        const double th = s * M_PI / 360.0;
        const std::vector<double> x{std::cos(th), std::sin(th)};
        double hess[4];
        for (int i = 0; i < 2; ++i) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const auto gp = loss.mean_eval(xp).grad;
            const auto gm = loss.mean_eval(xm).grad;
            for (int j = 0; j < 2; ++j) hess[j * 2 + i] = (gp[j] - gm[j]) / (2.0 * h);
        }
        const double tr = hess[0] + hess[3];
        const double det = hess[0] * hess[3] - hess[1] * hess[2];
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        oracle = std::max({oracle, std::abs(tr / 2.0 + disc), std::abs(tr / 2.0 - disc)});
    }
    const double est = estimate_rho(loss, 32, 40, 23) / 1.1;  // undo the widening
    CHECK(est == doctest::Approx(oracle).epsilon(0.15));
}

TEST_CASE("multigroup loss is invariant to rescaling each group separately") {
    MultigroupLoss loss(3, symmetric_matrix(3, 51), 4, symmetric_matrix(4, 52));
    std::mt19937_64 rng(9);
    auto x = random_unit_vector(7, rng);
    const double base = loss.mean_eval(x).loss;
    for (double c : {1e-2, 5.0, 1e2}) {
        auto y = x;
        for (std::size_t i = 0; i < 3; ++i) y[i] *= c;
        CHECK(loss.mean_eval(y).loss == doctest::Approx(base).epsilon(1e-11));
        y = x;
        for (std::size_t i = 3; i < 7; ++i) y[i] *= c;
        CHECK(loss.mean_eval(y).loss == doctest::Approx(base).epsilon(1e-11));
    }
}

TEST_CASE("random_unit_vector is unit length and seed-deterministic") {
    std::mt19937_64 r1(77), r2(77);
    const auto a = random_unit_vector(10, r1);
    const auto b = random_unit_vector(10, r2);
    CHECK(a == b);
    double n = 0.0;
    for (double v : a) n += v * v;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
}
