#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/quantile.hpp"

namespace wbar {

/// Value at Risk at level p: the p-th quantile of the loss model.
inline double value_at_risk(const QuantileFunction& q, double p) {
    detail::require_open_unit(p, "value_at_risk");
    return q(p);
}

/// Tail integral ES_p = 1/(1-p) int_p^1 VaR_s ds by midpoint quadrature,
/// using grid.size() nodes on the tail. A positive trim restricts the
/// integral to (p, 1-trim) and renormalizes by the trimmed length, keeping
/// ES >= VaR while shielding exploding upper tails.
inline double expected_shortfall_quadrature(const QuantileFunction& q, double p,
                                            const Grid& grid) {
    detail::require_open_unit(p, "expected_shortfall");
    const double upper = 1.0 - grid.trim();
    if (!(p < upper))
        throw invalid_input_error("expected_shortfall: level " + std::to_string(p) +
                                  " not below 1 - trim");
    const std::size_t m = grid.size();
    const double h = (upper - p) / static_cast<double>(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double s = p + (static_cast<double>(k) + 0.5) * h;
        const double v = q(s);
        if (!std::isfinite(v))
            throw numeric_error("expected_shortfall: non-finite quantile at s=" +
                                std::to_string(s) + "; consider a positive tail trim");
        acc += v;
    }
    return acc / static_cast<double>(m);
}

/// ES of an empirical quantile: exact tail average of the order statistics
/// (the step integral is available in closed form, no quadrature). When the
/// tail mass (1-p)n is an integer up to rounding, this is exactly the mean
/// of the top k order statistics.
inline double expected_shortfall_exact(const EmpiricalQuantile& e, double p) {
    const std::size_t n = e.sorted_sample.size();
    const double tail_count = (1.0 - p) * static_cast<double>(n);
    const double rounded = std::round(tail_count);
    if (rounded >= 1.0 && std::abs(tail_count - rounded) <= 1e-9 * static_cast<double>(n)) {
        const std::size_t k = static_cast<std::size_t>(rounded);
        double acc = 0.0;
        for (std::size_t i = n - k; i < n; ++i) acc += e.sorted_sample[i];
        return acc / static_cast<double>(k);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        const double overlap = std::max(0.0, hi - std::max(p, lo));
        acc += overlap * e.sorted_sample[i];
    }
    return acc / (1.0 - p);
}

inline double expected_shortfall(const QuantileFunction& q, double p, const Grid& grid) {
    detail::require_open_unit(p, "expected_shortfall");
    if (const auto* e = q.as_empirical()) return expected_shortfall_exact(*e, p);
    return expected_shortfall_quadrature(q, p, grid);
}

inline std::vector<double> default_risk_levels() { return {0.90, 0.95, 0.975, 0.99, 0.995}; }

struct RiskReport {
    std::vector<double> levels;
    std::vector<double> var;
    std::vector<double> es;
};

inline RiskReport risk_report(const QuantileFunction& q, const Grid& grid,
                              const std::vector<double>& levels = default_risk_levels()) {
    RiskReport report;
    for (double p : levels) {
        report.levels.push_back(p);
        report.var.push_back(value_at_risk(q, p));
        report.es.push_back(expected_shortfall(q, p, grid));
    }
    return report;
}

}  // namespace wbar
