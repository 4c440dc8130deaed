#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "silab/losses.hpp"

namespace silab {

// Result of one homogeneity / scaling audit over sampled points.
struct HomogeneityReport {
    bool pass = false;
    double max_rel_error = 0.0;
    std::size_t n_checked = 0;
    std::string detail;
};

// Checks f(c x) = c^k f(x) for every sampled x and every scale in `scales`.
// `f` maps a flat vector to a flat vector (scalar outputs have size 1).
HomogeneityReport check_homogeneity(
    const std::function<std::vector<double>(std::span<const double>)>& f, std::size_t dim,
    double k, const std::vector<double>& scales, std::size_t n_samples, std::uint64_t seed,
    double tol = 1e-9);

// Checks that the gradient of a k-homogeneous loss is (k-1)-homogeneous:
// grad f(c x) = c^{k-1} grad f(x), and the Euler identity
// <grad f(x), x> = k f(x).
HomogeneityReport check_gradient_degree(const StochasticLoss& loss, double k,
                                        const std::vector<double>& scales,
                                        std::size_t n_samples, std::uint64_t seed,
                                        double tol = 1e-9);

enum class ScalingMode {
    // (c L, eta / c, c lambda) reproduces the iterates exactly
    kLossRescale,
    // (L, c^2 eta, lambda / c^2, c x0) reproduces the direction x/|x|
    kInitRescale,
};

// Runs two short SGD+WD trainings related by the given equivalent scaling and
// verifies that the predicted correspondence holds at every step.
HomogeneityReport check_equivalent_scaling(const StochasticLoss& loss,
                                           std::span<const double> x0, double eta,
                                           double lambda, double c, std::size_t T,
                                           std::uint64_t seed, ScalingMode mode,
                                           double tol = 1e-8);

// Estimates the sphere-restricted Hessian smoothness constant rho: the largest
// spectral norm of the mean-loss Hessian over sampled points of the sphere of
// the given radius, by power iteration on finite-difference Hessian-vector
// products, widened 10%.
double estimate_rho(const StochasticLoss& loss, std::size_t n_samples,
                    std::size_t power_iters, std::uint64_t seed, double radius = 1.0);

// Verifies that the gradient norm of the mean loss at unit-sphere points
// never exceeds pi * rho.
HomogeneityReport check_gradient_bounds(const StochasticLoss& loss, double rho,
                                        std::size_t n_samples, std::uint64_t seed);

}  // namespace silab
