#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace silab {

struct Grad {
    double loss = 0.0;
    std::vector<double> grad;
};

// A seeded family of losses L_gamma over a flat parameter vector. gamma is an
// opaque index; eval(gamma, x) is a pure function of (gamma, x), so a fixed
// gamma sequence replays bitwise-identically. Deterministic losses ignore
// gamma and have mean_eval == eval.
class StochasticLoss {
  public:
    virtual ~StochasticLoss() = default;
    virtual std::size_t dim() const = 0;
    virtual bool scale_invariant() const { return true; }
    virtual Grad eval(std::uint64_t gamma, std::span<const double> x) const = 0;
    virtual Grad mean_eval(std::span<const double> x) const = 0;
};

// Measured constants of a scale-invariant loss family on the unit sphere,
// estimated by sampling and widened 10% to a conservative envelope.
struct LossProfile {
    double rho = 0.0;       // max spectral norm of the Hessian on the sphere
    double m_max = 0.0;     // sup over gamma and sphere of the gradient norm
    double sigma_lo2 = 0.0; // lower bound on E|grad L_gamma(unit x)|^2
    double sigma_hi2 = 0.0; // upper bound on the same
};

// x^T A x / x^T x for symmetric A. Scale invariant; gradient
// (2/|x|^2)(A x - L(x) x) is orthogonal to x.
class RayleighLoss : public StochasticLoss {
  public:
    RayleighLoss(std::size_t d, std::vector<double> a);
    std::size_t dim() const override { return d_; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override;
    const std::vector<double>& matrix() const { return a_; }

  private:
    std::size_t d_;
    std::vector<double> a_;  // row-major d x d, symmetric
};

// sigma * atan2(x2, x1) on R^2 \ {0}. The gradient field
// sigma/(|x|^2) * (-x2, x1) is globally smooth and has norm exactly
// sigma/|x| everywhere; the loss value uses the principal branch and is
// discontinuous across the negative x1 axis. See README for why the value
// is defined beyond the x1 > 0 half-plane.
class AngleLoss : public StochasticLoss {
  public:
    explicit AngleLoss(double sigma) : sigma_(sigma) {}
    std::size_t dim() const override { return 2; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override;
    double sigma() const { return sigma_; }

  private:
    double sigma_;
};

// Logistic regression on 1-d non-separable data reparametrized through the
// product X = x_1 ... x_{2k}: L(x) = sum_i ln(1 + exp(-z_i y_i X)).
// 2k-homogeneous structure, not scale invariant.
class ProductLogisticLoss : public StochasticLoss {
  public:
    ProductLogisticLoss(std::vector<std::pair<double, int>> data, std::size_t k);
    std::size_t dim() const override { return 2 * k_; }
    bool scale_invariant() const override { return false; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override;

    double product(std::span<const double> x) const;
    double outer_loss(double X) const;        // L~(X)
    double outer_loss_deriv(double X) const;  // L~'(X)
    // Global minimizer X* of L~ by bisection on L~'.
    double minimizer(double lo = 1e-9, double hi = 1e6, double tol = 1e-12) const;
    std::size_t k() const { return k_; }

  private:
    std::vector<std::pair<double, int>> data_;  // (z_i, y_i)
    std::size_t k_;
};

// 0.5 * |A B^T - Y|_F^2 over the stacked vector [vec(A); vec(B)].
class MatFacLoss : public StochasticLoss {
  public:
    MatFacLoss(std::size_t d, std::size_t r, std::vector<double> y);
    std::size_t dim() const override { return 2 * d_ * r_; }
    bool scale_invariant() const override { return false; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override;

  private:
    std::size_t d_, r_;
    std::vector<double> y_;
};

// Rayleigh loss with a random symmetric perturbation per sample:
// A_gamma = A_mean + noise_scale * (S + S^T)/2, S entries iid uniform[-1,1]
// drawn from gamma. Optionally the noise is amplified by spike_factor with
// probability spike_prob (heavy-tailed variant for clipping experiments).
class StochasticRayleigh : public StochasticLoss {
  public:
    StochasticRayleigh(std::size_t d, std::vector<double> a_mean, double noise_scale,
                       double spike_prob = 0.0, double spike_factor = 1.0);
    std::size_t dim() const override { return d_; }
    Grad eval(std::uint64_t gamma, std::span<const double> x) const override;
    Grad mean_eval(std::span<const double> x) const override;
    std::vector<double> sample_matrix(std::uint64_t gamma) const;

  private:
    std::size_t d_;
    std::vector<double> a_mean_;
    double noise_scale_, spike_prob_, spike_factor_;
};

// rayleigh(A, x) * rayleigh(B, y) + rayleigh(A, x) over the stacked vector
// [x; y]; invariant to independent rescaling of each group.
class MultigroupLoss : public StochasticLoss {
  public:
    MultigroupLoss(std::size_t d1, std::vector<double> a, std::size_t d2,
                   std::vector<double> b);
    std::size_t dim() const override { return d1_ + d2_; }
    Grad eval(std::uint64_t, std::span<const double> x) const override { return mean_eval(x); }
    Grad mean_eval(std::span<const double> x) const override;
    std::size_t dim1() const { return d1_; }
    std::size_t dim2() const { return d2_; }

  private:
    RayleighLoss la_, lb_;
    std::size_t d1_, d2_;
};

// Estimates rho, M and the sigma band of a scale-invariant loss family by
// sampling sphere points and gammas; envelope widened 10%.
LossProfile profile_loss(const StochasticLoss& loss, std::size_t n_sphere_samples,
                         std::size_t n_gamma_samples, std::uint64_t seed);

// Uniform random unit vector.
std::vector<double> random_unit_vector(std::size_t d, std::mt19937_64& rng);

}  // namespace silab
