#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/gram.hpp"
#include "wbar/solver.hpp"

namespace wbar {

/// Search grid for the penalty hyperparameters (lambda, alpha).
struct TuningGrid {
    std::vector<double> lambdas;
    std::vector<double> alphas;

    /// 25 log-spaced lambdas in [1e-4, 10] and alphas 0, 0.05, ..., 1.
    static TuningGrid defaults() {
        TuningGrid g;
        const int nl = 25;
        for (int i = 0; i < nl; ++i)
            g.lambdas.push_back(std::pow(10.0, -4.0 + 5.0 * i / (nl - 1.0)));
        for (int i = 0; i <= 20; ++i) g.alphas.push_back(0.05 * i);
        return g;
    }

    static TuningGrid lambdas_only(std::vector<double> lambdas, double alpha) {
        return TuningGrid{std::move(lambdas), {alpha}};
    }

    void validate() const {
        if (lambdas.empty() || alphas.empty())
            throw invalid_input_error("TuningGrid: empty grid");
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            if (!(lambdas[i] > 0.0)) throw invalid_input_error("TuningGrid: lambda must be > 0");
            if (i > 0 && lambdas[i] < lambdas[i - 1])
                throw invalid_input_error("TuningGrid: lambdas must be sorted ascending");
        }
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0))
                throw invalid_input_error("TuningGrid: alpha must lie in [0,1]");
            if (i > 0 && alphas[i] < alphas[i - 1])
                throw invalid_input_error("TuningGrid: alphas must be sorted ascending");
        }
    }
};

struct TuningResult {
    double lambda = 0.0;
    double alpha = 0.0;
    FitResult fit;
    double criterion = 0.0;
    std::size_t cells_evaluated = 0;
    std::size_t cells_failed = 0;
};

namespace detail {

/// Keeps the best cell under the total order: smaller criterion wins; exact
/// ties go to the larger lambda, then the larger alpha (prefer the sparser,
/// more regularized model).
struct CellSelector {
    bool have = false;
    double criterion = 0.0, lambda = 0.0, alpha = 0.0;

    bool offer(double crit, double lam, double alp) {
        const bool better =
            !have || crit < criterion ||
            (crit == criterion && (lam > lambda || (lam == lambda && alp > alpha)));
        if (better) {
            have = true;
            criterion = crit;
            lambda = lam;
            alpha = alp;
        }
        return better;
    }
};

}  // namespace detail

/// Grid search over (lambda, alpha) on precomputed Gram coefficients. The
/// selection criterion is the squared distance of the fitted barycenter from
/// the criterion target, W2^2(mu(w), crit) = w'S w - 2 sigma_crit'w +
/// sigma0_crit. Cells whose solver fails are skipped and counted.
inline TuningResult grid_search_grams(const GramSystem& fit_gram,
                                      const Eigen::VectorXd& crit_sigma, double crit_sigma0_sq,
                                      const TuningGrid& tuning, const SolverOptions& opts = {}) {
    tuning.validate();
    detail::CellSelector best;
    TuningResult out;
    FitResult best_fit;
    for (double lambda : tuning.lambdas) {
        for (double alpha : tuning.alphas) {
            ++out.cells_evaluated;
            try {
                const PenaltyConfig pen(lambda, alpha);
                FitResult fit = solve(fit_gram, pen, opts);
                const Eigen::VectorXd w = detail::to_eigen(fit.weights);
                const double crit =
                    w.dot(fit_gram.raw() * w) - 2.0 * crit_sigma.dot(w) + crit_sigma0_sq;
                if (best.offer(crit, lambda, alpha)) best_fit = std::move(fit);
            } catch (const std::exception&) {
                ++out.cells_failed;
            }
        }
    }
    if (!best.have) throw numeric_error("grid_search: every tuning cell failed");
    out.lambda = best.lambda;
    out.alpha = best.alpha;
    out.criterion = best.criterion;
    out.fit = std::move(best_fit);
    return out;
}

/// Grid search on model/target quantile functions. criterion_target defaults
/// to the fit target (the in-sample criterion); pass a held-out estimate for
/// the cross-validation variant.
inline TuningResult grid_search(const std::vector<QuantileFunction>& models,
                                const QuantileFunction& target, const Grid& grid,
                                const TuningGrid& tuning, const SolverOptions& opts = {},
                                const QuantileFunction* criterion_target = nullptr) {
    const GramSystem gram = gram_system(models, target, grid);
    if (criterion_target == nullptr)
        return grid_search_grams(gram, gram.sigma(), gram.sigma0_sq(), tuning, opts);
    const GramSystem crit_gram = gram_system(models, *criterion_target, grid);
    return grid_search_grams(gram, crit_gram.sigma(), crit_gram.sigma0_sq(), tuning, opts);
}

}  // namespace wbar
