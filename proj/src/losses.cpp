#include "silab/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "silab/homogeneity.hpp"
#include "silab/kernels.hpp"

namespace silab {

namespace {

double sq_norm(std::span<const double> x) {
    return kernels::active().sq_norm(x.data(), x.size());
}

void check_symmetric(const std::vector<double>& a, std::size_t d) {
    if (a.size() != d * d) throw std::invalid_argument("matrix size != d*d");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::abs(a[i * d + j] - a[j * d + i]) > 1e-12 * (1.0 + std::abs(a[i * d + j])))
                throw std::invalid_argument("matrix not symmetric");
}

// numerically stable ln(1 + e^t)
double softplus(double t) {
    if (t > 30.0) return t;
    if (t < -30.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

// ---- RayleighLoss -------------------------------------------------------

RayleighLoss::RayleighLoss(std::size_t d, std::vector<double> a) : d_(d), a_(std::move(a)) {
    check_symmetric(a_, d_);
}

Grad RayleighLoss::mean_eval(std::span<const double> x) const {
    if (x.size() != d_) throw std::invalid_argument("rayleigh: dim mismatch");
    const double nx2 = sq_norm(x);
    if (nx2 == 0.0) throw std::domain_error("rayleigh: x = 0");
    std::vector<double> ax(d_, 0.0);
    for (std::size_t i = 0; i < d_; ++i)
        ax[i] = kernels::active().dot(a_.data() + i * d_, x.data(), d_);
    const double val = kernels::active().dot(x.data(), ax.data(), d_) / nx2;
    Grad g;
    g.loss = val;
    g.grad.resize(d_);
    for (std::size_t i = 0; i < d_; ++i) g.grad[i] = 2.0 / nx2 * (ax[i] - val * x[i]);
    return g;
}

// ---- AngleLoss ----------------------------------------------------------

Grad AngleLoss::mean_eval(std::span<const double> x) const {
    if (x.size() != 2) throw std::invalid_argument("angle: dim != 2");
    const double nx2 = x[0] * x[0] + x[1] * x[1];
    if (nx2 == 0.0) throw std::domain_error("angle: x = 0");
    Grad g;
    g.loss = sigma_ * std::atan2(x[1], x[0]);
    g.grad = {-sigma_ * x[1] / nx2, sigma_ * x[0] / nx2};
    return g;
}

// ---- ProductLogisticLoss ------------------------------------------------

ProductLogisticLoss::ProductLogisticLoss(std::vector<std::pair<double, int>> data,
                                         std::size_t k)
    : data_(std::move(data)), k_(k) {
    if (k_ < 2) throw std::invalid_argument("product logistic: k >= 2 required");
    bool pos = false, neg = false;
    for (auto& [z, y] : data_) {
        (z * y > 0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw std::invalid_argument("product logistic: data must be non-separable");
}

double ProductLogisticLoss::product(std::span<const double> x) const {
    double X = 1.0;
    for (double v : x) X *= v;
    return X;
}

double ProductLogisticLoss::outer_loss(double X) const {
    double s = 0.0;
    for (auto& [z, y] : data_) s += softplus(-z * y * X);
    return s;
}

double ProductLogisticLoss::outer_loss_deriv(double X) const {
    double s = 0.0;
    for (auto& [z, y] : data_) {
        const double a = z * y;
        s += -a * sigmoid(-a * X);
    }
    return s;
}

double ProductLogisticLoss::minimizer(double lo, double hi, double tol) const {
    if (outer_loss_deriv(lo) >= 0.0 || outer_loss_deriv(hi) <= 0.0)
        throw std::domain_error("product logistic: minimizer not bracketed");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (outer_loss_deriv(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Grad ProductLogisticLoss::mean_eval(std::span<const double> x) const {
    if (x.size() != 2 * k_) throw std::invalid_argument("product logistic: dim mismatch");
    const double X = product(x);
    Grad g;
    g.loss = outer_loss(X);
    const double dX = outer_loss_deriv(X);
    g.grad.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] == 0.0) throw std::domain_error("product logistic: x_j = 0");
        g.grad[j] = (X / x[j]) * dX;
    }
    return g;
}

// ---- MatFacLoss ---------------------------------------------------------

MatFacLoss::MatFacLoss(std::size_t d, std::size_t r, std::vector<double> y)
    : d_(d), r_(r), y_(std::move(y)) {
    if (y_.size() != d_ * d_) throw std::invalid_argument("matfac: Y size != d*d");
}

Grad MatFacLoss::mean_eval(std::span<const double> x) const {
    if (x.size() != 2 * d_ * r_) throw std::invalid_argument("matfac: dim mismatch");
    const double* A = x.data();
    const double* B = x.data() + d_ * r_;
    // R = A B^T - Y
    std::vector<double> R(d_ * d_);
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = 0; j < d_; ++j)
            R[i * d_ + j] = kernels::active().dot(A + i * r_, B + j * r_, r_) - y_[i * d_ + j];
    Grad g;
    g.loss = 0.5 * kernels::active().sq_norm(R.data(), R.size());
    g.grad.assign(x.size(), 0.0);
    double* dA = g.grad.data();
    double* dB = g.grad.data() + d_ * r_;
    // dA = R B ; dB = R^T A
    kernels::active().matmul_acc(R.data(), B, dA, d_, d_, r_);
    kernels::active().matmul_tn_acc(R.data(), A, dB, d_, d_, r_);
    return g;
}

// ---- StochasticRayleigh -------------------------------------------------

StochasticRayleigh::StochasticRayleigh(std::size_t d, std::vector<double> a_mean,
                                       double noise_scale, double spike_prob,
                                       double spike_factor)
    : d_(d),
      a_mean_(std::move(a_mean)),
      noise_scale_(noise_scale),
      spike_prob_(spike_prob),
      spike_factor_(spike_factor) {
    check_symmetric(a_mean_, d_);
}

std::vector<double> StochasticRayleigh::sample_matrix(std::uint64_t gamma) const {
    std::mt19937_64 rng(gamma);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    double ns = noise_scale_;
    if (spike_prob_ > 0.0) {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (u01(rng) < spike_prob_) ns *= spike_factor_;
    }
    std::vector<double> s(d_ * d_);
    for (auto& v : s) v = unif(rng);
    std::vector<double> a = a_mean_;
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = 0; j < d_; ++j)
            a[i * d_ + j] += ns * 0.5 * (s[i * d_ + j] + s[j * d_ + i]);
    return a;
}

Grad StochasticRayleigh::eval(std::uint64_t gamma, std::span<const double> x) const {
    if (noise_scale_ == 0.0) return mean_eval(x);
    return RayleighLoss(d_, sample_matrix(gamma)).mean_eval(x);
}

Grad StochasticRayleigh::mean_eval(std::span<const double> x) const {
    return RayleighLoss(d_, a_mean_).mean_eval(x);
}

// ---- MultigroupLoss -----------------------------------------------------

MultigroupLoss::MultigroupLoss(std::size_t d1, std::vector<double> a, std::size_t d2,
                               std::vector<double> b)
    : la_(d1, std::move(a)), lb_(d2, std::move(b)), d1_(d1), d2_(d2) {}

Grad MultigroupLoss::mean_eval(std::span<const double> x) const {
    if (x.size() != d1_ + d2_) throw std::invalid_argument("multigroup: dim mismatch");
    auto gx = la_.mean_eval(x.subspan(0, d1_));
    auto gy = lb_.mean_eval(x.subspan(d1_, d2_));
    Grad g;
    g.loss = gx.loss * gy.loss + gx.loss;
    g.grad.resize(d1_ + d2_);
    for (std::size_t i = 0; i < d1_; ++i) g.grad[i] = gx.grad[i] * (gy.loss + 1.0);
    for (std::size_t i = 0; i < d2_; ++i) g.grad[d1_ + i] = gx.loss * gy.grad[i];
    return g;
}

// ---- profiling ----------------------------------------------------------

std::vector<double> random_unit_vector(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(d);
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (auto& vi : v) {
            vi = normal(rng);
            n2 += vi * vi;
        }
    } while (n2 < 1e-24);
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& vi : v) vi *= inv;
    return v;
}

LossProfile profile_loss(const StochasticLoss& loss, std::size_t n_sphere_samples,
                         std::size_t n_gamma_samples, std::uint64_t seed) {
    if (!loss.scale_invariant())
        throw std::invalid_argument("profile_loss: loss not tagged scale invariant");
    std::mt19937_64 rng(seed);
    const std::size_t d = loss.dim();

    // Euler contract check at a handful of points
    for (int i = 0; i < 5; ++i) {
        auto x = random_unit_vector(d, rng);
        auto g = loss.mean_eval(x);
        const double inner = kernels::active().dot(g.grad.data(), x.data(), d);
        const double gn = std::sqrt(sq_norm(g.grad));
        if (std::abs(inner) > 1e-6 * (gn + 1e-30))
            throw std::invalid_argument("profile_loss: Euler check failed (not scale invariant)");
    }

    LossProfile p;
    p.rho = estimate_rho(loss, n_sphere_samples, 30, rng());

    double m2_max = 0.0;
    double e_min = std::numeric_limits<double>::infinity();
    double e_max = 0.0;
    for (std::size_t s = 0; s < n_sphere_samples; ++s) {
        auto x = random_unit_vector(d, rng);
        double acc = 0.0;
        for (std::size_t t = 0; t < n_gamma_samples; ++t) {
            auto g = loss.eval(rng(), x);
            const double gn2 = sq_norm(g.grad);
            acc += gn2;
            m2_max = std::max(m2_max, gn2);
        }
        const double mean = acc / double(n_gamma_samples);
        e_min = std::min(e_min, mean);
        e_max = std::max(e_max, mean);
    }
    p.m_max = std::sqrt(m2_max) * 1.1;
    p.sigma_lo2 = e_min * 0.9;
    p.sigma_hi2 = e_max * 1.1;
    return p;
}

}  // namespace silab
