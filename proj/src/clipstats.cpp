#include "silab/clipstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "silab/kernels.hpp"

namespace silab {

namespace {
constexpr double kMassTol = 1e-12;

double effective_c(double c, ClipConvention conv) {
    return conv == ClipConvention::kSquared ? c * c : c;
}
}  // namespace

EmpiricalDist::EmpiricalDist(std::vector<double> atoms_in, std::vector<double> weights_in)
    : atoms(std::move(atoms_in)), weights(std::move(weights_in)) {
    if (atoms.empty() || atoms.size() != weights.size())
        throw std::invalid_argument("dist: atoms/weights size mismatch or empty");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i] < 0.0) throw std::invalid_argument("dist: negative atom");
        if (i > 0 && atoms[i] <= atoms[i - 1])
            throw std::invalid_argument("dist: atoms not strictly sorted");
        if (weights[i] <= 0.0) throw std::invalid_argument("dist: nonpositive weight");
        total += weights[i];
    }
    if (std::abs(total - 1.0) > kMassTol)
        throw std::invalid_argument("dist: weights do not sum to 1");
}

EmpiricalDist EmpiricalDist::from_samples(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("dist: no samples");
    std::sort(samples.begin(), samples.end());
    std::vector<double> atoms, weights;
    const double w = 1.0 / double(samples.size());
    for (double s : samples) {
        if (!atoms.empty() && s - atoms.back() <= 1e-12 * (1.0 + std::abs(s))) {
            weights.back() += w;
        } else {
            atoms.push_back(s);
            weights.push_back(w);
        }
    }
    // renormalize away accumulated rounding
    double total = 0.0;
    for (double wi : weights) total += wi;
    for (double& wi : weights) wi /= total;
    return EmpiricalDist(std::move(atoms), std::move(weights));
}

double EmpiricalDist::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) m += atoms[i] * weights[i];
    return m;
}

double EmpiricalDist::mass_at_zero() const {
    return atoms.front() == 0.0 ? weights.front() : 0.0;
}

double EmpiricalDist::tail_weight(double m) const {
    double w = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i)
        if (atoms[i] >= m) w += weights[i];
    return w;
}

double f_clipped(const EmpiricalDist& p, double c, double mu, ClipConvention conv) {
    if (c <= 1.0) throw std::invalid_argument("f_clipped: C > 1 required");
    if (mu < 0.0) throw std::invalid_argument("f_clipped: mu >= 0 required");
    const double cap = effective_c(c, conv) * mu;
    double s = 0.0;
    for (std::size_t i = 0; i < p.atoms.size(); ++i)
        s += p.weights[i] * std::min(p.atoms[i], cap);
    return s;
}

double inv_c_median(const EmpiricalDist& p, double c) {
    if (c <= 1.0) throw std::invalid_argument("inv_c_median: C > 1 required");
    const double target = 1.0 / c;
    // tail weight is non-increasing in the atom, so scan from the top
    double tail = 0.0;
    for (std::size_t i = p.atoms.size(); i-- > 0;) {
        tail += p.weights[i];
        if (tail >= target - kMassTol) return p.atoms[i];
    }
    return p.atoms.front();
}

ClippedMeanResult clipped_mean(const EmpiricalDist& p, double c, ClipConvention conv) {
    if (c <= 1.0) throw std::invalid_argument("clipped_mean: C > 1 required");
    const double ce = effective_c(c, conv);
    ClippedMeanResult res;
    res.m_inv_c = inv_c_median(p, ce);
    const double w0 = p.mass_at_zero();
    const double thr = 1.0 - 1.0 / ce;

    if (w0 > thr + kMassTol) {
        res.classification = "zero-only";
        res.mu_c = 0.0;
        return res;
    }
    if (std::abs(w0 - thr) <= kMassTol) {
        // G vanishes on [0, M/C]; the largest root sits at the kink
        res.classification = "interval";
        res.mu_c = res.m_inv_c / ce;
        if (res.mu_c > 0.0) res.alpha_c_bound = alpha_c_bound(p, c, conv);
        return res;
    }

    res.classification = "two-roots";
    auto g = [&](double mu) { return f_clipped(p, ce, mu, ClipConvention::kDirect) - mu; };
    double lo = res.m_inv_c / ce;  // argmax of the concave G, G(lo) >= 0
    double hi = p.mean();
    if (g(hi) >= 0.0) {
        // no atom is ever clipped at mu = mean, so mean is the fixed point
        res.mu_c = hi;
    } else {
        for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? lo : hi) = mid;
        }
        res.mu_c = 0.5 * (lo + hi);
    }
    res.alpha_c_bound = alpha_c_bound(p, c, conv);
    return res;
}

double alpha_c_bound(const EmpiricalDist& p, double c, ClipConvention conv) {
    const double ce = effective_c(c, conv);
    const double m = inv_c_median(p, ce);
    const double w0 = p.mass_at_zero();
    const double thr = 1.0 - 1.0 / ce;
    double mu;
    if (w0 > thr + kMassTol) {
        throw std::domain_error("alpha_c_bound: mu_{P,C} = 0, bound undefined");
    } else if (std::abs(w0 - thr) <= kMassTol) {
        mu = m / ce;
    } else {
        // recompute the positive root without recursing through clipped_mean
        auto g = [&](double x) { return f_clipped(p, ce, x, ClipConvention::kDirect) - x; };
        double lo = m / ce, hi = p.mean();
        if (g(hi) >= 0.0) {
            mu = hi;
        } else {
            for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
                const double mid = 0.5 * (lo + hi);
                (g(mid) > 0.0 ? lo : hi) = mid;
            }
            mu = 0.5 * (lo + hi);
        }
    }
    if (mu <= 0.0) throw std::domain_error("alpha_c_bound: mu_{P,C} = 0, bound undefined");
    double trunc = 0.0;
    for (std::size_t i = 0; i < p.atoms.size(); ++i)
        if (p.atoms[i] < m) trunc += p.atoms[i] * p.weights[i];
    return trunc / mu;
}

GPropertiesReport verify_g_properties(const EmpiricalDist& p, double c,
                                      std::size_t grid_size) {
    if (c <= 1.0) throw std::invalid_argument("verify_g_properties: C > 1 required");
    if (grid_size < 3) throw std::invalid_argument("verify_g_properties: grid too small");
    GPropertiesReport rep;
    const double hi = p.mean() * (1.0 + 1.0 / c);
    const double h = hi / double(grid_size - 1);
    auto g = [&](double mu) { return f_clipped(p, c, mu) - mu; };

    rep.concave = true;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    std::vector<double> gv(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) {
        gv[i] = g(double(i) * h);
        if (gv[i] > best) {
            best = gv[i];
            best_i = i;
        }
    }
    for (std::size_t i = 1; i + 1 < grid_size; ++i) {
        if (gv[i] + 1e-12 < 0.5 * (gv[i - 1] + gv[i + 1])) {
            rep.concave = false;
            rep.witness_mu = double(i) * h;
            break;
        }
    }
    const double argmax_ref = inv_c_median(p, c) / c;
    rep.argmax_ok = std::abs(double(best_i) * h - argmax_ref) <= h * (1.0 + 1e-9);
    const auto cm = clipped_mean(p, c);
    rep.sandwich_ok = argmax_ref <= cm.mu_c + 1e-12 && cm.mu_c <= p.mean() + 1e-12;
    if (!rep.sandwich_ok && rep.witness_mu == 0.0) rep.witness_mu = cm.mu_c;
    return rep;
}

EmpiricalDist random_dist(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> n_atoms(2, 20);
    std::uniform_real_distribution<double> value(0.0, 10.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t n = n_atoms(rng);
    std::vector<double> samples(n);
    for (auto& s : samples) s = value(rng);
    if (u01(rng) < 0.3) samples[0] = 0.0;
    std::sort(samples.begin(), samples.end());
    std::vector<double> atoms, weights;
    double total = 0.0;
    for (double s : samples) {
        if (!atoms.empty() && s <= atoms.back()) continue;
        atoms.push_back(s);
        weights.push_back(u01(rng) + 0.05);
        total += weights.back();
    }
    for (auto& w : weights) w /= total;
    // absorb rounding so the weights sum to 1 exactly enough
    double sum = 0.0;
    for (double w : weights) sum += w;
    weights.back() += 1.0 - sum;
    return EmpiricalDist(std::move(atoms), std::move(weights));
}

EmpiricalDist empirical_grad_dist(const StochasticLoss& loss, std::span<const double> x,
                                  std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("empirical_grad_dist: n >= 1");
    std::mt19937_64 rng(seed);
    std::vector<double> samples(n_samples);
    for (auto& s : samples) {
        const auto g = loss.eval(rng(), x);
        s = kernels::active().sq_norm(g.grad.data(), g.grad.size());
    }
    return EmpiricalDist::from_samples(std::move(samples));
}

}  // namespace silab
