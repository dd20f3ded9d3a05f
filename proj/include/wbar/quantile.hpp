#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/weights.hpp"

namespace wbar {

namespace detail {

/// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16).
/// Relative accuracy around 1e-15 over (0,1).
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("inverse_normal_cdf: p must lie in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            q * (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                       6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                     1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                   1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-6) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    double x = (q < 0.0) ? -val : val;
    // Two Newton corrections against erfc tighten the rational approximation
    // to full double precision. Work on the smaller tail where erfc keeps
    // relative accuracy.
    const double pt = std::min(p, 1.0 - p);
    double xt = -std::abs(x);
    for (int it = 0; it < 2; ++it) {
        const double density = std::exp(-0.5 * xt * xt) * 0.3989422804014326779;
        if (!(density > 0.0) || !std::isfinite(density)) break;
        const double cdf = 0.5 * std::erfc(-xt * 0.7071067811865475244);
        xt -= (cdf - pt) / density;
    }
    if (std::isfinite(xt)) x = (p < 0.5) ? xt : -xt;
    return x;
}

inline void require_open_unit(double s, const char* who) {
    if (!(s > 0.0 && s < 1.0))
        throw std::domain_error(std::string(who) + ": argument " + std::to_string(s) +
                                " outside (0,1)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parametric families
// ---------------------------------------------------------------------------

struct NormalDist {
    double mean, sigma;
    double quantile(double s) const { return mean + sigma * detail::inverse_normal_cdf(s); }
};

struct WeibullDist {
    double shape, scale;
    double quantile(double s) const { return scale * std::pow(-std::log1p(-s), 1.0 / shape); }
};

struct ExponentialDist {
    double rate;
    double quantile(double s) const { return -std::log1p(-s) / rate; }
};

struct UniformDist {
    double lo, hi;
    double quantile(double s) const { return lo + (hi - lo) * s; }
};

struct PointMassDist {
    double value;
    double quantile(double) const { return value; }
};

class QuantileFunction;

/// Empirical (step) quantile: the left-continuous generalized inverse of the
/// empirical CDF, g(s) = x_(ceil(n s)). Sample is stored sorted.
struct EmpiricalQuantile {
    std::vector<double> sorted_sample;

    double quantile(double s) const {
        const std::size_t n = sorted_sample.size();
        const double scaled = s * static_cast<double>(n);
        std::size_t idx = static_cast<std::size_t>(std::ceil(scaled));
        if (idx < 1) idx = 1;
        if (idx > n) idx = n;
        return sorted_sample[idx - 1];
    }
};

/// Barycentric combination: shift + sum_j w_j g_j(s). Nonnegative weights
/// keep the result a quantile function; the shift carries the sequential
/// workflow's bias correction.
struct CombinationQuantile {
    std::vector<QuantileFunction> components;
    WeightVector weights;
    double shift = 0.0;

    double quantile(double s) const;
};

// ---------------------------------------------------------------------------
// QuantileFunction
// ---------------------------------------------------------------------------

/// A left-continuous non-decreasing map on (0,1): the quantile function of a
/// probability model on the real line. Immutable after construction.
class QuantileFunction {
  public:
    using Rep = std::variant<NormalDist, WeibullDist, ExponentialDist, UniformDist,
                             PointMassDist, EmpiricalQuantile, CombinationQuantile>;

    static QuantileFunction normal(double mean, double sigma) {
        if (!(sigma > 0.0) || !std::isfinite(mean) || !std::isfinite(sigma))
            throw invalid_input_error("normal: requires finite mean and sigma > 0");
        return QuantileFunction(NormalDist{mean, sigma});
    }
    static QuantileFunction weibull(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw invalid_input_error("weibull: requires shape > 0 and scale > 0");
        return QuantileFunction(WeibullDist{shape, scale});
    }
    static QuantileFunction exponential(double rate) {
        if (!(rate > 0.0)) throw invalid_input_error("exponential: requires rate > 0");
        return QuantileFunction(ExponentialDist{rate});
    }
    static QuantileFunction uniform(double lo, double hi) {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw invalid_input_error("uniform: requires finite a < b");
        return QuantileFunction(UniformDist{lo, hi});
    }
    static QuantileFunction point_mass(double value) {
        if (!std::isfinite(value)) throw invalid_input_error("point_mass: non-finite value");
        return QuantileFunction(PointMassDist{value});
    }
    static QuantileFunction empirical(std::vector<double> sorted_sample) {
        return QuantileFunction(EmpiricalQuantile{std::move(sorted_sample)});
    }
    static QuantileFunction combination(std::vector<QuantileFunction> components,
                                        WeightVector weights, double shift = 0.0) {
        if (components.size() != weights.size())
            throw invalid_input_error("combination: " + std::to_string(components.size()) +
                                      " components vs " + std::to_string(weights.size()) +
                                      " weights");
        if (!std::isfinite(shift)) throw invalid_input_error("combination: non-finite shift");
        return QuantileFunction(CombinationQuantile{std::move(components), std::move(weights), shift});
    }

    double operator()(double s) const {
        detail::require_open_unit(s, "QuantileFunction");
        return std::visit([s](const auto& d) { return d.quantile(s); }, rep_);
    }

    const Rep& rep() const { return rep_; }
    bool is_empirical() const { return std::holds_alternative<EmpiricalQuantile>(rep_); }
    const EmpiricalQuantile* as_empirical() const {
        return std::get_if<EmpiricalQuantile>(&rep_);
    }
    const CombinationQuantile* as_combination() const {
        return std::get_if<CombinationQuantile>(&rep_);
    }

  private:
    explicit QuantileFunction(Rep rep) : rep_(std::move(rep)) {}
    Rep rep_;
};

inline double CombinationQuantile::quantile(double s) const {
    double v = shift;
    for (std::size_t j = 0; j < components.size(); ++j) v += weights[j] * components[j](s);
    return v;
}

/// Evaluate q at s in (0,1); domain error otherwise.
inline double evaluate(const QuantileFunction& q, double s) { return q(s); }

/// Empirical quantile estimator from a raw sample (type-1 left-continuous
/// inverse). The sample is copied and sorted.
inline QuantileFunction empirical_quantile(const std::vector<double>& sample) {
    if (sample.empty()) throw invalid_input_error("empirical_quantile: empty sample");
    for (double x : sample)
        if (!std::isfinite(x)) throw invalid_input_error("empirical_quantile: non-finite sample value");
    std::vector<double> sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    return QuantileFunction::empirical(std::move(sorted));
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Midpoint quadrature grid on (trim, 1-trim). Midpoints never touch 0 or 1,
/// so unbounded quantiles stay finite at every node; trim further shields
/// heavy upper tails and is a documented approximation knob.
class Grid {
  public:
    explicit Grid(std::size_t nodes = 1000, double trim = 0.0)
        : nodes_(nodes), trim_(trim) {
        if (nodes_ < 2) throw invalid_input_error("Grid: need at least 2 nodes");
        if (!(trim_ >= 0.0 && trim_ < 0.5)) throw invalid_input_error("Grid: trim must lie in [0, 0.5)");
    }

    std::size_t size() const { return nodes_; }
    double trim() const { return trim_; }
    /// Quadrature weight shared by every node.
    double step() const { return (1.0 - 2.0 * trim_) / static_cast<double>(nodes_); }
    /// k-th midpoint node, k in [0, size()).
    double node(std::size_t k) const {
        return trim_ + (static_cast<double>(k) + 0.5) * step();
    }

  private:
    std::size_t nodes_;
    double trim_;
};

namespace detail {

inline std::vector<double> evaluate_on_grid(const QuantileFunction& q, const Grid& grid,
                                            const char* who) {
    std::vector<double> vals(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        vals[k] = q(grid.node(k));
        if (!std::isfinite(vals[k]))
            throw numeric_error(std::string(who) + ": non-finite quantile at node " +
                                std::to_string(k) + " (s=" + std::to_string(grid.node(k)) + ")");
    }
    return vals;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Integrals and distances
// ---------------------------------------------------------------------------

/// Midpoint approximation of the model mean. With a positive trim this is
/// the trimmed mean, normalized by the trimmed length so constants are exact.
inline double mean_value(const QuantileFunction& q, const Grid& grid) {
    const auto vals = detail::evaluate_on_grid(q, grid, "mean_value");
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc / static_cast<double>(grid.size());
}

/// Quadratic Wasserstein distance via the quantile representation,
/// W_2(mu_1, mu_2)^2 = int_0^1 (g_1 - g_2)^2 ds, midpoint rule.
inline double wasserstein2_squared(const QuantileFunction& q1, const QuantileFunction& q2,
                                   const Grid& grid) {
    const auto a = detail::evaluate_on_grid(q1, grid, "wasserstein2");
    const auto b = detail::evaluate_on_grid(q2, grid, "wasserstein2");
    double acc = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return acc * grid.step();
}

inline double wasserstein2(const QuantileFunction& q1, const QuantileFunction& q2,
                           const Grid& grid) {
    return std::sqrt(wasserstein2_squared(q1, q2, grid));
}

/// Quantile function of the barycenter with weights w: the weighted average
/// of the component quantiles (zero shift).
inline QuantileFunction barycenter_quantile(std::vector<QuantileFunction> models,
                                            WeightVector w) {
    return QuantileFunction::combination(std::move(models), std::move(w), 0.0);
}

/// Exact L2(0,1) inner product of two empirical (step) quantile functions,
/// integrating the piecewise-constant product over the merged breakpoints.
/// Cross-check path for the quadrature Gram entries.
inline double inner_product_exact(const QuantileFunction& qa, const QuantileFunction& qb) {
    const auto* ea = qa.as_empirical();
    const auto* eb = qb.as_empirical();
    if (ea == nullptr || eb == nullptr)
        throw invalid_input_error("inner_product_exact: both arguments must be Empirical");
    const auto& xa = ea->sorted_sample;
    const auto& xb = eb->sorted_sample;
    const std::size_t na = xa.size(), nb = xb.size();
    double acc = 0.0, lo = 0.0;
    std::size_t ia = 0, ib = 0;  // current step indices
    while (ia < na && ib < nb) {
        const double ra = static_cast<double>(ia + 1) / static_cast<double>(na);
        const double rb = static_cast<double>(ib + 1) / static_cast<double>(nb);
        const double hi = std::min(ra, rb);
        acc += (hi - lo) * xa[ia] * xb[ib];
        lo = hi;
        if (ra <= hi) ++ia;
        if (rb <= hi) ++ib;
    }
    return acc;
}

}  // namespace wbar
