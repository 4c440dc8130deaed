#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "silab/losses.hpp"

namespace silab {

// Discrete distribution of a nonnegative statistic (here: squared gradient
// norms). Atoms are strictly sorted; weights are positive and sum to 1.
struct EmpiricalDist {
    std::vector<double> atoms;
    std::vector<double> weights;

    EmpiricalDist(std::vector<double> atoms_in, std::vector<double> weights_in);

    // Builds a distribution from raw samples with uniform weights; samples
    // closer than 1e-12 (relative) are merged into one atom.
    static EmpiricalDist from_samples(std::vector<double> samples);

    double mean() const;
    // P[t = 0]
    double mass_at_zero() const;
    // P[t >= m]
    double tail_weight(double m) const;
};

// Which fixed-point equation defines the clipped mean. The clip level in
// F(mu) = E[min{t, C mu}] either uses the factor C directly (the form the
// norm-equilibrium dynamics use) or squares it; the two readings disagree in
// the source material, so both are exposed. Default: direct.
enum class ClipConvention { kDirect, kSquared };

struct ClippedMeanResult {
    double mu_c = 0.0;  // largest fixed point
    // "two-roots": 0 and a unique positive root; "interval": every point of
    // [0, M/C] is a root, mu_c = M/C; "zero-only": 0 is the only root.
    std::string classification;
    double m_inv_c = 0.0;        // M_{P,1/C}
    double alpha_c_bound = 0.0;  // largest alpha the inequality supports; 0 when mu_c = 0
};

// F_{P,C}(mu) = E[min{t, C mu}] (direct convention; the squared convention
// replaces C by C^2).
double f_clipped(const EmpiricalDist& p, double c, double mu,
                 ClipConvention conv = ClipConvention::kDirect);

// M_{P,1/C} = sup{M >= 0 | P[t >= M] >= 1/C}.
double inv_c_median(const EmpiricalDist& p, double c);

// Largest fixed point of mu -> F_{P,C}(mu), classified by the zero-mass
// threshold P[t=0] vs 1 - 1/C, with bisection on the concave G(mu) = F(mu) - mu
// over [M/C, mean(P)] in the two-roots case.
ClippedMeanResult clipped_mean(const EmpiricalDist& p, double c,
                               ClipConvention conv = ClipConvention::kDirect);

// Largest alpha with alpha * mu_{P,C} <= E[t * 1[t < M_{P,1/C}]].
// Requires mu_{P,C} > 0.
double alpha_c_bound(const EmpiricalDist& p, double c,
                     ClipConvention conv = ClipConvention::kDirect);

struct GPropertiesReport {
    bool concave = false;
    bool argmax_ok = false;   // grid argmax within one cell of M/C
    bool sandwich_ok = false; // M/C <= mu <= mean(P)
    double witness_mu = 0.0;  // first grid point violating a property, if any
    bool pass() const { return concave && argmax_ok && sandwich_ok; }
};

// Grid audit of G(mu) = F(mu) - mu over [0, mean(P)(1 + 1/C)]: midpoint
// concavity, argmax location, and the sandwich bound on the fixed point.
GPropertiesReport verify_g_properties(const EmpiricalDist& p, double c,
                                      std::size_t grid_size);

// Random discrete distribution (2..20 atoms in [0,10], sometimes with mass
// exactly at 0) for property checks.
EmpiricalDist random_dist(std::mt19937_64& rng);

// Samples |grad L_gamma(x)|^2 at a fixed x to build P_x.
EmpiricalDist empirical_grad_dist(const StochasticLoss& loss, std::span<const double> x,
                                  std::size_t n_samples, std::uint64_t seed);

}  // namespace silab
