#include "silab/optim.hpp"

#include <random>
#include <stdexcept>

#include "silab/kernels.hpp"

namespace silab {

namespace {
constexpr double kDivergenceNorm = 1e100;

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}
}  // namespace

void OptimizerConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("optimizer: eta must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("optimizer: lambda must be >= 0");
    if (eta * lambda >= 1.0) throw std::invalid_argument("optimizer: eta*lambda must be < 1");
    if (std::isnan(clip_factor) || (std::isfinite(clip_factor) && clip_factor <= 1.0))
        throw std::invalid_argument("optimizer: clip factor must be > 1 when finite");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (i > 0 && schedule[i].first <= schedule[i - 1].first)
            throw std::invalid_argument("optimizer: schedule steps must increase");
        if (!(schedule[i].second > 0.0) || !std::isfinite(schedule[i].second))
            throw std::invalid_argument("optimizer: schedule multipliers must be positive");
    }
}

double OptimizerConfig::lr_multiplier(std::size_t step) const {
    double mult = 1.0;
    for (const auto& [s, m] : schedule) {
        if (step >= s) mult = m;
    }
    return mult;
}

double ParamGroup::norm() const {
    return std::sqrt(kernels::active().sq_norm(x.data(), x.size()));
}

namespace {

GroupStepRecord affine_step(ParamGroup& group, std::span<const double> grad,
                            const OptimizerConfig& cfg, double lr_mult, bool clip) {
    if (grad.size() != group.x.size())
        throw std::invalid_argument("optimizer step: gradient shape mismatch");
    if (!all_finite(grad)) throw std::domain_error("optimizer step: non-finite gradient");
    const double eta = cfg.eta * lr_mult;
    const auto& K = kernels::active();

    GroupStepRecord rec;
    rec.norm = group.norm();
    rec.grad_norm = std::sqrt(K.sq_norm(grad.data(), grad.size()));
    rec.eff_lr = rec.norm > 0.0 ? eta / (rec.norm * rec.norm) : 0.0;
    rec.r_t = (2.0 * cfg.lambda / eta) * rec.norm * rec.norm;
    rec.n_t = rec.grad_norm;

    double step_scale = -eta;  // multiplies grad in the update
    if (clip) {
        const double cap = std::sqrt(2.0 * cfg.clip_factor * cfg.lambda / eta) * rec.norm;
        rec.clip_triggered = rec.grad_norm > cap;
        rec.n_t = rec.clip_triggered ? cap : rec.grad_norm;
        if (rec.grad_norm > 0.0) {
            step_scale = -eta * rec.n_t / rec.grad_norm;
        } else {
            step_scale = 0.0;  // pure decay step
        }
    }

    K.scale(1.0 - eta * cfg.lambda, group.x.data(), group.x.size());
    if (step_scale != 0.0) K.axpy(step_scale, grad.data(), group.x.data(), group.x.size());
    return rec;
}

}  // namespace

GroupStepRecord gd_wd_step(ParamGroup& group, std::span<const double> grad,
                           const OptimizerConfig& cfg, double lr_mult) {
    return affine_step(group, grad, cfg, lr_mult, false);
}

GroupStepRecord sgd_wd_step(ParamGroup& group, std::span<const double> grad,
                            const OptimizerConfig& cfg, double lr_mult) {
    return affine_step(group, grad, cfg, lr_mult, false);
}

GroupStepRecord clipped_sgd_wd_step(ParamGroup& group, std::span<const double> grad,
                                    const OptimizerConfig& cfg, double lr_mult) {
    if (!cfg.clipping_enabled())
        throw std::invalid_argument("clipped step: clip factor must be finite");
    return affine_step(group, grad, cfg, lr_mult, true);
}

double effective_lr(const ParamGroup& group, const OptimizerConfig& cfg, double lr_mult) {
    const double n = group.norm();
    if (n == 0.0) throw std::domain_error("effective_lr: zero norm");
    return cfg.eta * lr_mult / (n * n);
}

GroupedEval SingleGroupLoss::eval(std::uint64_t gamma,
                                  const std::vector<ParamGroup>& groups) const {
    if (groups.size() != 1) throw std::invalid_argument("single-group loss: one group expected");
    auto g = loss_.eval(gamma, groups[0].x);
    return GroupedEval{g.loss, {std::move(g.grad)}};
}

Trajectory run_training(const GroupedStochasticLoss& loss, std::vector<ParamGroup> groups,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed,
                        std::vector<ParamGroup>* final_groups) {
    cfg.validate();
    if (T < 1) throw std::invalid_argument("run_training: T >= 1 required");
    Trajectory traj;
    traj.config = cfg;
    traj.seed = seed;
    std::mt19937_64 rng(seed);

    for (std::size_t t = 0; t < T; ++t) {
        const std::uint64_t gamma = rng();
        GroupedEval ev;
        try {
            ev = loss.eval(gamma, groups);
        } catch (const std::domain_error& e) {
            traj.truncated = true;
            traj.diverged = true;
            traj.failure = e.what();
            break;
        }
        const double mult = cfg.lr_multiplier(t);
        StepRecord rec;
        rec.step = t;
        rec.loss = ev.loss;
        bool bad = !std::isfinite(ev.loss);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (!all_finite(ev.grads[g])) {
                bad = true;
                break;
            }
        }
        if (bad) {
            traj.truncated = true;
            traj.diverged = true;
            traj.failure = "non-finite loss or gradient";
            traj.steps.push_back(std::move(rec));
            break;
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            GroupStepRecord grec;
            if (groups[g].scale_invariant) {
                grec = cfg.clipping_enabled()
                           ? clipped_sgd_wd_step(groups[g], ev.grads[g], cfg, mult)
                           : sgd_wd_step(groups[g], ev.grads[g], cfg, mult);
            } else {
                // plain SGD, separate LR, no decay
                OptimizerConfig head = cfg;
                head.eta = cfg.head_eta > 0.0 ? cfg.head_eta : cfg.eta;
                head.lambda = 0.0;
                head.clip_factor = std::numeric_limits<double>::infinity();
                grec = sgd_wd_step(groups[g], ev.grads[g], head, mult);
            }
            rec.groups.push_back(grec);
        }
        traj.steps.push_back(std::move(rec));
        for (const auto& grp : groups) {
            const double n = grp.norm();
            if (!std::isfinite(n) || n > kDivergenceNorm) {
                traj.diverged = true;
                traj.truncated = true;
                traj.failure = "parameter norm diverged";
                break;
            }
        }
        if (traj.truncated) break;
    }
    if (final_groups) *final_groups = std::move(groups);
    return traj;
}

Trajectory run_training(const GroupedStochasticLoss& loss, std::vector<ParamGroup> groups,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed) {
    return run_training(loss, std::move(groups), cfg, T, seed, nullptr);
}

Trajectory run_training(const StochasticLoss& loss, std::vector<double> x0,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed) {
    SingleGroupLoss wrapped(loss);
    std::vector<ParamGroup> groups{
        ParamGroup{"params", std::move(x0), loss.scale_invariant(), 0}};
    return run_training(wrapped, std::move(groups), cfg, T, seed, nullptr);
}

}  // namespace silab
