#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "silab/losses.hpp"

namespace silab {

struct OptimizerConfig {
    double eta = 0.0;     // learning rate
    double lambda = 0.0;  // weight decay
    // clipping factor C; infinity means no clipping, finite values must be > 1
    double clip_factor = std::numeric_limits<double>::infinity();
    // piecewise-constant LR multipliers: (step, multiplier), applied from
    // that step on; multiplier 1 before the first entry
    std::vector<std::pair<std::size_t, double>> schedule;
    // plain-SGD learning rate for non-scale-invariant groups (no WD, no clip)
    double head_eta = 0.0;

    void validate() const;
    double lr_multiplier(std::size_t step) const;
    bool clipping_enabled() const { return std::isfinite(clip_factor); }
};

struct ParamGroup {
    std::string name;
    std::vector<double> x;  // concatenated parameter vector
    bool scale_invariant = true;
    int group_index = 0;

    double norm() const;
};

struct GroupStepRecord {
    double norm = 0.0;       // |x(t)| before the update
    double grad_norm = 0.0;  // |grad L_t(x(t))|
    double eff_lr = 0.0;     // eta_t / |x(t)|^2
    double r_t = 0.0;        // (2 lambda / eta_t) |x(t)|^2
    bool clip_triggered = false;
    double n_t = 0.0;  // applied gradient-norm (the Alg. 1 min; = grad_norm unclipped)
};

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0;  // L_t(x(t))
    std::vector<GroupStepRecord> groups;
};

struct Trajectory {
    std::vector<StepRecord> steps;
    OptimizerConfig config;
    std::uint64_t seed = 0;
    bool diverged = false;
    bool truncated = false;
    std::string failure;  // set when truncated
};

// One GD+WD update: x <- (1 - eta lambda) x - eta grad. Returns the record
// for the pre-update state. lr_mult scales eta for scheduled steps.
GroupStepRecord gd_wd_step(ParamGroup& group, std::span<const double> grad,
                           const OptimizerConfig& cfg, double lr_mult = 1.0);

// SGD+WD is the same affine update applied to a sampled gradient.
GroupStepRecord sgd_wd_step(ParamGroup& group, std::span<const double> grad,
                            const OptimizerConfig& cfg, double lr_mult = 1.0);

// Relative-global-clipped SGD+WD: the update direction is preserved and its
// gradient norm is capped at sqrt(2 C lambda / eta) |x|. A zero gradient
// yields a pure decay step.
GroupStepRecord clipped_sgd_wd_step(ParamGroup& group, std::span<const double> grad,
                                    const OptimizerConfig& cfg, double lr_mult = 1.0);

double effective_lr(const ParamGroup& group, const OptimizerConfig& cfg,
                    double lr_mult = 1.0);

// Loss over several parameter groups; gradients are returned per group.
struct GroupedEval {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;
};

class GroupedStochasticLoss {
  public:
    virtual ~GroupedStochasticLoss() = default;
    virtual GroupedEval eval(std::uint64_t gamma, const std::vector<ParamGroup>& groups) const = 0;
};

// Wraps a flat StochasticLoss as a single-group loss.
class SingleGroupLoss : public GroupedStochasticLoss {
  public:
    explicit SingleGroupLoss(const StochasticLoss& loss) : loss_(loss) {}
    GroupedEval eval(std::uint64_t gamma, const std::vector<ParamGroup>& groups) const override;

  private:
    const StochasticLoss& loss_;
};

// Runs T steps from the given groups. Deterministic given seed. Scale
// invariant groups take SGD+WD (clipped when cfg.clip_factor is finite);
// other groups take plain SGD at cfg.head_eta. Divergence and loss domain
// errors truncate the trajectory and are recorded, not thrown.
Trajectory run_training(const GroupedStochasticLoss& loss, std::vector<ParamGroup> groups,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed);

Trajectory run_training(const StochasticLoss& loss, std::vector<double> x0,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed);

// Final parameter state of the last run is returned through this channel:
// run_training fills it when a non-null pointer is passed.
Trajectory run_training(const GroupedStochasticLoss& loss, std::vector<ParamGroup> groups,
                        const OptimizerConfig& cfg, std::size_t T, std::uint64_t seed,
                        std::vector<ParamGroup>* final_groups);

}  // namespace silab
