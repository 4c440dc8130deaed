#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "silab/losses.hpp"
#include "silab/optim.hpp"

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

OptimizerConfig basic_cfg(double eta = 0.01, double lambda = 0.1) {
    OptimizerConfig cfg;
    cfg.eta = eta;
    cfg.lambda = lambda;
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects malformed settings") {
    CHECK_NOTHROW(basic_cfg().validate());

    auto cfg = basic_cfg(0.0);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = basic_cfg(-0.1);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = basic_cfg(0.01, -0.1);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = basic_cfg(2.0, 0.6);  // eta * lambda >= 1
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = basic_cfg();
    cfg.clip_factor = 1.0;  // must be > 1
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.clip_factor = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = basic_cfg();
    cfg.schedule = {{10, 0.5}, {5, 0.1}};  // steps must increase
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.schedule = {{5, 0.5}, {10, -0.1}};  // multipliers must be positive
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.schedule = {{5, 0.5}, {10, 0.1}};
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.lr_multiplier(4) == 1.0);
    CHECK(cfg.lr_multiplier(5) == 0.5);
    CHECK(cfg.lr_multiplier(9) == 0.5);
    CHECK(cfg.lr_multiplier(10) == 0.1);
}

TEST_CASE("one step reproduces the exact norm recursion") {
    // |x(t+1)|^2 = (1 - eta lambda)^2 |x(t)|^2 + eta^2 n_t^2 when the
    // gradient is orthogonal to x (always true for scale-invariant losses)
    RayleighLoss loss(6, symmetric_matrix(6, 5));
    auto cfg = basic_cfg(0.02, 0.3);
    std::mt19937_64 rng(7);
    auto x = random_unit_vector(6, rng);
    for (auto& v : x) v *= 1.7;

    ParamGroup g{"all", x};
    for (int t = 0; t < 50; ++t) {
        const double before2 = g.norm() * g.norm();
        const Grad grad = loss.mean_eval(g.x);
        const auto rec = gd_wd_step(g, grad.grad, cfg);
        const double predicted = (1.0 - cfg.eta * cfg.lambda) *
                                     (1.0 - cfg.eta * cfg.lambda) * before2 +
                                 cfg.eta * cfg.eta * rec.n_t * rec.n_t;
        const double after2 = g.norm() * g.norm();
        CHECK(std::abs(after2 - predicted) <= 1e-10 * (after2 + 1.0));
        CHECK(rec.norm == doctest::Approx(std::sqrt(before2)).epsilon(1e-14));
        CHECK(rec.eff_lr == doctest::Approx(cfg.eta / before2).epsilon(1e-14));
        CHECK(rec.r_t ==
              doctest::Approx(2.0 * cfg.lambda / cfg.eta * before2).epsilon(1e-14));
        CHECK_FALSE(rec.clip_triggered);
        CHECK(rec.n_t == rec.grad_norm);
    }
}

TEST_CASE("relative global clipping") {
    auto cfg = basic_cfg(0.0008, 0.01);
    cfg.clip_factor = 4.0;
    const double thr_per_norm = std::sqrt(2.0 * 4.0 * 0.01 / 0.0008);
    CHECK(thr_per_norm == doctest::Approx(10.0).epsilon(1e-14));

    SUBCASE("triggers exactly when |grad| exceeds the relative threshold") {
        for (double gn : {0.1, 9.99, 10.01, 500.0}) {
            ParamGroup g{"g", {1.0, 0.0}};
            std::vector<double> grad{0.0, gn};  // orthogonal to x, |x| = 1
            const auto rec = clipped_sgd_wd_step(g, grad, cfg);
            const double cap = thr_per_norm * rec.norm;
            CHECK(rec.clip_triggered == (gn > cap));
            if (gn > cap) {
                CHECK(std::abs(rec.n_t - cap) <= 1e-12 * cap);
                // the direction is untouched: only the second coordinate moved
                CHECK(g.x[1] == doctest::Approx(-cfg.eta * cap).epsilon(1e-12));
            } else {
                CHECK(rec.n_t == gn);
            }
        }
    }
    SUBCASE("zero gradient gives a pure decay step") {
        ParamGroup g{"g", {3.0, 4.0}};
        std::vector<double> grad{0.0, 0.0};
        const auto rec = clipped_sgd_wd_step(g, grad, cfg);
        CHECK_FALSE(rec.clip_triggered);
        CHECK(rec.n_t == 0.0);
        CHECK(g.x[0] == doctest::Approx(3.0 * (1.0 - cfg.eta * cfg.lambda)).epsilon(1e-15));
        CHECK(g.x[1] == doctest::Approx(4.0 * (1.0 - cfg.eta * cfg.lambda)).epsilon(1e-15));
    }
    SUBCASE("cap scales linearly with the parameter norm") {
        for (double s : {0.01, 1.0, 100.0}) {
            ParamGroup g{"g", {s, 0.0}};
            std::vector<double> grad{0.0, 1e6};
            const auto rec = clipped_sgd_wd_step(g, grad, cfg);
            CHECK(rec.clip_triggered);
            CHECK(rec.n_t == doctest::Approx(10.0 * s).epsilon(1e-12));
        }
    }
}

TEST_CASE("schedule multipliers change the step at the boundary") {
    RayleighLoss loss(4, symmetric_matrix(4, 9));
    auto cfg = basic_cfg(0.01, 0.05);
    cfg.schedule = {{3, 0.25}};
    std::mt19937_64 rng(2);
    auto x0 = random_unit_vector(4, rng);

    const auto traj = run_training(loss, x0, cfg, 6, 1);
    REQUIRE(traj.steps.size() == 6);
    for (std::size_t t = 0; t < 6; ++t) {
        const auto& r = traj.steps[t].groups[0];
        const double eta_t = cfg.eta * (t >= 3 ? 0.25 : 1.0);
        CHECK(r.eff_lr == doctest::Approx(eta_t / (r.norm * r.norm)).epsilon(1e-12));
        CHECK(r.r_t ==
              doctest::Approx(2.0 * cfg.lambda / eta_t * r.norm * r.norm).epsilon(1e-12));
    }
}

TEST_CASE("training is a deterministic replay of the seed") {
    StochasticRayleigh loss(5, symmetric_matrix(5, 11), 0.3);
    auto cfg = basic_cfg(0.005, 0.02);
    std::mt19937_64 rng(3);
    auto x0 = random_unit_vector(5, rng);
    const auto a = run_training(loss, x0, cfg, 40, 123);
    const auto b = run_training(loss, x0, cfg, 40, 123);
    const auto c = run_training(loss, x0, cfg, 40, 124);
    REQUIRE(a.steps.size() == 40);
    for (std::size_t t = 0; t < 40; ++t) {
        CHECK(a.steps[t].loss == b.steps[t].loss);
        CHECK(a.steps[t].groups[0].grad_norm == b.steps[t].groups[0].grad_norm);
    }
    bool any_diff = false;
    for (std::size_t t = 0; t < 40; ++t)
        if (a.steps[t].loss != c.steps[t].loss) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("non-scale-invariant groups take plain SGD without decay or clipping") {
    // Group 2 holds a quadratic bowl 0.5|y - 1|^2 minimized at 1; with decay it
    // could never sit at the minimum. Group 1 is a scale-invariant rayleigh.
    class TwoGroupLoss : public GroupedStochasticLoss {
      public:
        explicit TwoGroupLoss(const RayleighLoss& r) : r_(r) {}
        GroupedEval eval(std::uint64_t, const std::vector<ParamGroup>& groups) const override {
            GroupedEval out;
            const Grad g = r_.mean_eval(groups[0].x);
            out.loss = g.loss;
            out.grads.push_back(g.grad);
            std::vector<double> gh(groups[1].x.size());
            for (std::size_t i = 0; i < gh.size(); ++i) {
                gh[i] = groups[1].x[i] - 1.0;
                out.loss += 0.5 * gh[i] * gh[i];
            }
            out.grads.push_back(gh);
            return out;
        }

      private:
        const RayleighLoss& r_;
    };

    RayleighLoss ray(3, symmetric_matrix(3, 13));
    TwoGroupLoss loss(ray);
    auto cfg = basic_cfg(0.01, 0.1);
    cfg.clip_factor = 4.0;
    cfg.head_eta = 0.5;
    std::mt19937_64 rng(4);
    std::vector<ParamGroup> groups{{"body", random_unit_vector(3, rng), true, 0},
                                   {"head", {0.0, 2.0}, false, 1}};
    std::vector<ParamGroup> final_groups;
    const auto traj = run_training(loss, groups, cfg, 200, 7, &final_groups);
    CHECK_FALSE(traj.diverged);
    REQUIRE(final_groups.size() == 2);
    // plain SGD on the bowl converges to exactly 1 in both coordinates; weight
    // decay would instead settle at 1/(1 + lambda-ish) < 1
    CHECK(final_groups[1].x[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(final_groups[1].x[1] == doctest::Approx(1.0).epsilon(1e-9));
    // the non-SI record reports the plain step, never a clip
    for (const auto& s : traj.steps) CHECK_FALSE(s.groups[1].clip_triggered);
}

TEST_CASE("explosive matrix factorization run is flagged as diverged") {
    // rank-one factorization of 0 with eta > 4 / a0^2 oscillates and explodes
    MatFacLoss loss(1, 1, {0.0});
    OptimizerConfig cfg;
    cfg.eta = 4.5;
    cfg.head_eta = 4.5;
    const auto traj = run_training(loss, {1.0, 0.1}, cfg, 200, 0);
    CHECK(traj.diverged);
    CHECK(traj.steps.size() <= 200);
}

TEST_CASE("domain errors truncate the trajectory instead of throwing") {
    AngleLoss loss(1.0);
    auto cfg = basic_cfg(0.5, 1.0 / 0.5 - 1e-9);  // decay factor ~0: x collapses
    // huge decay drives x to (0, 0) where the loss is undefined
    Trajectory traj;
    CHECK_NOTHROW(traj = run_training(loss, {0.0, 0.0}, cfg, 10, 0));
    CHECK(traj.truncated);
    CHECK_FALSE(traj.failure.empty());
}
