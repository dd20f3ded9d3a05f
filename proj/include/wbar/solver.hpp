#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/gram.hpp"
#include "wbar/weights.hpp"

namespace wbar {

enum class PenaltyKind { pure, lasso, ridge, elastic_net };

inline const char* to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::pure: return "pure";
        case PenaltyKind::lasso: return "lasso";
        case PenaltyKind::ridge: return "ridge";
        case PenaltyKind::elastic_net: return "enet";
    }
    return "?";
}

/// Elastic-net penalty lambda * (alpha ||w||_1 + (1-alpha)/2 ||w||_2^2).
/// The kind is derived from (lambda, alpha): lambda = 0 is the pure
/// barycenter, alpha = 1 LASSO, alpha = 0 Ridge, anything else elastic net.
struct PenaltyConfig {
    double lambda = 0.0;
    double alpha = 1.0;
    PenaltyKind kind = PenaltyKind::pure;

    PenaltyConfig() = default;
    PenaltyConfig(double lambda_, double alpha_) : lambda(lambda_), alpha(alpha_) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw invalid_input_error("PenaltyConfig: lambda must be >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw invalid_input_error("PenaltyConfig: alpha must lie in [0,1]");
        if (lambda == 0.0)
            kind = PenaltyKind::pure;
        else if (alpha == 1.0)
            kind = PenaltyKind::lasso;
        else if (alpha == 0.0)
            kind = PenaltyKind::ridge;
        else
            kind = PenaltyKind::elastic_net;
    }

    static PenaltyConfig pure() { return PenaltyConfig(0.0, 1.0); }
    static PenaltyConfig lasso(double lambda) { return PenaltyConfig(lambda, 1.0); }
    static PenaltyConfig ridge(double lambda) { return PenaltyConfig(lambda, 0.0); }
    static PenaltyConfig elastic_net(double lambda, double alpha) {
        return PenaltyConfig(lambda, alpha);
    }

    double l1_strength() const { return lambda * alpha; }
    double l2_strength() const { return lambda * (1.0 - alpha); }
};

struct SolverOptions {
    /// Learning rate; empty selects 1/(trace(S_G) + max_j d_j), a Lipschitz
    /// upper bound for the surrogate gradient.
    std::optional<double> eta;
    /// Convergence threshold on the sup-norm of the weight change.
    double tol = 1e-9;
    int max_iter = 10000;
    /// Below this weight the L1 curvature of the local quadratic
    /// approximation is not activated.
    double eps_lqa = 1e-8;
    /// A thresholding zero is kept only while it costs at most
    /// sparsity_slack * trace(centered)/J of the smooth objective relative to
    /// the dense optimum (scale-aware, so behavior is unit-invariant).
    double sparsity_slack = 1e-5;

    void validate() const {
        if (eta && !(*eta > 0.0)) throw invalid_input_error("SolverOptions: eta must be > 0");
        if (!(tol > 0.0)) throw invalid_input_error("SolverOptions: tol must be > 0");
        if (max_iter < 1) throw invalid_input_error("SolverOptions: max_iter must be >= 1");
        if (!(eps_lqa > 0.0)) throw invalid_input_error("SolverOptions: eps_lqa must be > 0");
    }
};

struct FitResult {
    WeightVector weights{std::vector<double>{1.0}};
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<std::size_t> active_set;
};

/// Penalized least-squares objective in the quantile representation:
/// 1/2 (w' S_G w - 2 sigma_G' w + sigma0^2) + lambda (alpha ||w||_1 +
/// (1-alpha)/2 ||w||_2^2). The quadratic part equals 1/2 W_2^2(mu(w), target)
/// on the simplex, up to quadrature.
inline double objective(const GramSystem& gram, const WeightVector& w,
                        const PenaltyConfig& penalty) {
    if (w.size() != gram.size())
        throw invalid_input_error("objective: weight/gram dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> wv(w.values().data(),
                                               static_cast<Eigen::Index>(w.size()));
    const double quad = 0.5 * (wv.dot(gram.raw() * wv) - 2.0 * gram.sigma().dot(wv) +
                               gram.sigma0_sq());
    const double pen = penalty.lambda * (penalty.alpha * wv.lpNorm<1>() +
                                         0.5 * (1.0 - penalty.alpha) * wv.squaredNorm());
    return quad + pen;
}

/// Diagonal of the local quadratic approximation of the penalty around w0:
/// d_j = lambda*alpha / max(|w0_j|, eps) when w0_j >= eps (L1 curvature
/// active), plus the constant Ridge curvature lambda*(1-alpha).
inline Eigen::VectorXd lqa_matrix(const WeightVector& w0, const PenaltyConfig& penalty,
                                  double eps_lqa) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(w0.size()));
    const double l1 = penalty.l1_strength(), l2 = penalty.l2_strength();
    for (std::size_t j = 0; j < w0.size(); ++j) {
        const double wj = w0[j];
        double dj = l2;
        if (wj >= eps_lqa) dj += l1 / std::max(std::abs(wj), eps_lqa);
        d[static_cast<Eigen::Index>(j)] = dj;
    }
    return d;
}

namespace detail {

inline Eigen::VectorXd to_eigen(const WeightVector& w) {
    return Eigen::Map<const Eigen::VectorXd>(w.values().data(),
                                             static_cast<Eigen::Index>(w.size()));
}

inline WeightVector to_weights(const Eigen::VectorXd& v) {
    return WeightVector(std::vector<double>(v.data(), v.data() + v.size()));
}

inline double sup_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/// Equality-constrained solve of min 1/2 w'Qw - b'w with sum(w[s]) = 1 and
/// w = 0 off the support. Falls back to a jittered factorization when Q is
/// singular on the support (flat directions; any solution is as good).
inline Eigen::VectorXd solve_equality_on_support(const Eigen::MatrixXd& q,
                                                 const Eigen::VectorXd& b,
                                                 const std::vector<std::size_t>& support) {
    const Eigen::Index k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd qs(k, k);
    Eigen::VectorXd bs(k);
    for (Eigen::Index r = 0; r < k; ++r) {
        bs[r] = b[static_cast<Eigen::Index>(support[r])];
        for (Eigen::Index c = 0; c < k; ++c)
            qs(r, c) = q(static_cast<Eigen::Index>(support[r]),
                         static_cast<Eigen::Index>(support[c]));
    }
    const double scale = std::max(qs.trace() / static_cast<double>(k), 1e-30);
    double jitter = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
        Eigen::MatrixXd qj = qs;
        if (jitter > 0.0) qj.diagonal().array() += jitter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(qj);
        if (ldlt.info() == Eigen::Success) {
            const Eigen::VectorXd u = ldlt.solve(bs);
            const Eigen::VectorXd v = ldlt.solve(Eigen::VectorXd::Ones(k));
            const double denom = v.sum();
            if (u.allFinite() && v.allFinite() && std::abs(denom) > 1e-14) {
                const Eigen::VectorXd ws = u + ((1.0 - u.sum()) / denom) * v;
                const double residual =
                    ((qj * ws - bs).array() - (qj * ws - bs).mean()).abs().maxCoeff();
                if (ws.allFinite() && residual <= 1e-6 * (1.0 + scale)) {
                    Eigen::VectorXd w = Eigen::VectorXd::Zero(q.rows());
                    for (Eigen::Index r = 0; r < k; ++r)
                        w[static_cast<Eigen::Index>(support[r])] = ws[r];
                    return w;
                }
            }
        }
        jitter = (jitter == 0.0) ? 1e-12 * scale : jitter * 100.0;
    }
    throw numeric_error("solver: singular restricted system");
}

/// Normalize while keeping exact zeros exact.
inline void renormalize(Eigen::VectorXd& w) {
    const double s = w.sum();
    if (!(s > 0.0)) throw numeric_error("solver: nonpositive weight mass");
    w /= s;
}

/// Removal-only nonnegative solve on a fixed starting support: coordinates
/// clipped by the sign constraint leave the support; none are added.
inline Eigen::VectorXd polish_on_support(const Eigen::MatrixXd& q, const Eigen::VectorXd& b,
                                         std::vector<std::size_t> support) {
    while (true) {
        if (support.empty()) throw numeric_error("solver: empty support");
        if (support.size() == 1) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(q.rows());
            w[static_cast<Eigen::Index>(support[0])] = 1.0;
            return w;
        }
        Eigen::VectorXd w = solve_equality_on_support(q, b, support);
        std::size_t worst = support.size();
        double worst_val = -1e-13;
        for (std::size_t r = 0; r < support.size(); ++r) {
            const double v = w[static_cast<Eigen::Index>(support[r])];
            if (v < worst_val) {
                worst_val = v;
                worst = r;
            }
        }
        if (worst == support.size()) {
            for (std::size_t j : support) {
                auto& v = w[static_cast<Eigen::Index>(j)];
                if (v < 0.0) v = 0.0;
            }
            renormalize(w);
            return w;
        }
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(worst));
    }
}

/// Primal active-set solve of min 1/2 w'Qw - b'w over the whole simplex:
/// removals for violated signs, additions for violated stationarity.
inline Eigen::VectorXd simplex_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& b) {
    const std::size_t n = static_cast<std::size_t>(q.rows());
    std::vector<std::size_t> support = full_support(n);
    const double scale = std::max(q.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff(), 1.0);
    Eigen::VectorXd w;
    const int max_rounds = 50 * static_cast<int>(n) + 50;
    for (int round = 0; round < max_rounds; ++round) {
        w = polish_on_support(q, b, support);
        support.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (w[static_cast<Eigen::Index>(j)] > 0.0) support.push_back(j);
        const Eigen::VectorXd grad = q * w - b;
        double nu = 0.0;
        for (std::size_t j : support) nu += grad[static_cast<Eigen::Index>(j)];
        nu /= static_cast<double>(support.size());
        std::size_t entering = n;
        double worst = -1e-11 * scale;
        for (std::size_t j = 0; j < n; ++j) {
            if (w[static_cast<Eigen::Index>(j)] > 0.0) continue;
            const double reduced = grad[static_cast<Eigen::Index>(j)] - nu;
            if (reduced < worst) {
                worst = reduced;
                entering = j;
            }
        }
        if (entering == n) return w;
        support.push_back(entering);
        std::sort(support.begin(), support.end());
    }
    return w;  // active set cycled; current iterate is feasible and near-optimal
}

inline double smooth_objective(const GramSystem& gram, const Eigen::VectorXd& w,
                               double ridge_coef) {
    return 0.5 * (w.dot(gram.raw() * w) - 2.0 * gram.sigma().dot(w) + gram.sigma0_sq()) +
           0.5 * ridge_coef * w.squaredNorm();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

FitResult solve_enet(const GramSystem& gram, const PenaltyConfig& penalty,
                     const SolverOptions& opts = {});

/// Unpenalized barycenter calibration. The closed form
/// w = centered^{-1} 1 / (1' centered^{-1} 1) is the constrained minimizer
/// only when it is already nonnegative; if the system is singular or the
/// projection would clip, re-solve iteratively with lambda = 0.
inline FitResult solve_pure(const GramSystem& gram, const SolverOptions& opts = {}) {
    opts.validate();
    const std::size_t j = gram.size();
    if (j == 1) {
        FitResult res{WeightVector::uniform(1), 0.0, 0, true, {0}};
        res.objective = objective(gram, res.weights, PenaltyConfig::pure());
        return res;
    }
    const Eigen::MatrixXd& st = gram.centered();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(st);
    if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd u = ldlt.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(j)));
        const double denom = u.sum();
        const double residual =
            (st * u - Eigen::VectorXd::Ones(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff();
        const double scale = 1.0 + st.cwiseAbs().maxCoeff() * u.cwiseAbs().maxCoeff();
        if (u.allFinite() && std::abs(denom) > 1e-14 && residual <= 1e-8 * scale) {
            Eigen::VectorXd w = u / denom;
            if ((w.array() >= 0.0).all()) {
                FitResult res{detail::to_weights(w), 0.0, 0, true, {}};
                res.active_set = res.weights.active_set();
                res.objective = objective(gram, res.weights, PenaltyConfig::pure());
                return res;
            }
        }
    }
    return solve_enet(gram, PenaltyConfig::pure(), opts);
}

/// Ridge-penalized calibration, the one case with a closed form:
/// solve (S_G + lambda I) w = sigma_G on the simplex. Coordinates clipped by
/// the sign constraint drop out of the active set (sparsity preserved).
inline FitResult solve_ridge(const GramSystem& gram, double lambda,
                             const SolverOptions& opts = {}) {
    opts.validate();
    if (!(lambda > 0.0)) throw invalid_input_error("solve_ridge: lambda must be > 0");
    const std::size_t j = gram.size();
    Eigen::MatrixXd q = gram.raw();
    q.diagonal().array() += lambda;
    Eigen::VectorXd w = (j == 1) ? Eigen::VectorXd::Ones(1) : detail::simplex_qp(q, gram.sigma());
    FitResult res{detail::to_weights(w), 0.0, 0, true, {}};
    res.active_set = res.weights.active_set();
    res.objective = objective(gram, res.weights, PenaltyConfig::ridge(lambda));
    return res;
}

/// Iterative solver for the penalized calibration problem.
///
/// Smooth phase: projected gradient descent on the quadratic part
/// (S_G + lambda(1-alpha) I) with the exact Euclidean simplex projection and
/// the Lipschitz auto step 1/(trace(S_G) + max_j d_j). On the simplex the L1
/// norm is identically one, so this phase alone already minimizes the full
/// penalized objective; convergence is declared on the sup-norm weight
/// change.
///
/// Sparsification (only when lambda*alpha > 0): the L1 term cannot move the
/// constrained minimizer, so sparsity is a selection among near-optimal
/// points. Active weights are eliminated greedily, smallest first -- the
/// coordinates the local quadratic approximation curves hardest, at
/// lambda*alpha/w_j -- and a kill is kept only if (a) the removed
/// coordinate's correlation with the fit error satisfies the soft-threshold
/// stationarity bound |C_j| <= lambda*alpha, and (b) the cumulative cost in
/// the smooth objective stays within a scale-aware budget of the dense
/// optimum. A final audit re-admits any zero violating the threshold bound,
/// so reported zeros always carry a sparsity certificate.
inline FitResult solve_enet(const GramSystem& gram, const PenaltyConfig& penalty,
                            const SolverOptions& opts) {
    opts.validate();
    const std::size_t j = gram.size();
    if (j == 1) {
        FitResult res{WeightVector::uniform(1), 0.0, 1, true, {0}};
        res.objective = objective(gram, res.weights, penalty);
        return res;
    }
    const Eigen::Index n = static_cast<Eigen::Index>(j);
    const double l1 = penalty.l1_strength();
    const double l2 = penalty.l2_strength();
    const double trace = gram.raw().trace();
    const auto& s = gram.raw();
    const auto& sigma = gram.sigma();

    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(j));
    Eigen::VectorXd y = w;
    double momentum = 1.0;
    bool converged = false;
    int iterations = 0;
    double best_obj = std::numeric_limits<double>::infinity();
    int stall_streak = 0;
    const auto all = detail::full_support(j);
    const double eta = opts.eta ? *opts.eta : 1.0 / (trace + l2);

    // Nesterov-accelerated projected gradient with adaptive restart.
    for (int k = 1; k <= opts.max_iter; ++k) {
        iterations = k;
        const Eigen::VectorXd grad = s * y - sigma + l2 * y;
        const Eigen::VectorXd x = y - eta * grad;
        std::vector<double> xv(x.data(), x.data() + x.size());
        const auto proj = detail::project_simplex_euclidean(xv, all);
        const Eigen::Map<const Eigen::VectorXd> w_new(proj.data(), n);
        const Eigen::VectorXd step = w_new - w;
        const double delta = step.cwiseAbs().maxCoeff();

        if ((y - w_new).dot(step) > 0.0) {
            // momentum points uphill: restart
            momentum = 1.0;
            y = w_new;
        } else {
            const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            y = w_new + ((momentum - 1.0) / next) * step;
            momentum = next;
        }
        w = w_new;

        // Divergence guard for user-chosen learning rates: the objective
        // sitting above its running best for 50 straight iterations means
        // the step overshoots. The auto step is a Lipschitz bound and needs
        // no guard.
        if (opts.eta) {
            const double obj =
                0.5 * (w.dot(s * w) - 2.0 * sigma.dot(w) + gram.sigma0_sq()) +
                penalty.lambda * (penalty.alpha * w.lpNorm<1>() +
                                  0.5 * (1.0 - penalty.alpha) * w.squaredNorm());
            if (obj < best_obj - 1e-12 * (1.0 + std::abs(best_obj))) {
                best_obj = obj;
                stall_streak = 0;
            } else if (++stall_streak >= 50) {
                throw step_size_error("solve_enet: objective has not improved for 50 "
                                      "iterations; reduce the learning rate eta");
            }
        }

        if (delta < opts.tol) {
            converged = true;
            break;
        }
    }

    if (l1 > 0.0) {
        Eigen::MatrixXd q = s;
        q.diagonal().array() += l2;

        auto support_of = [n](const Eigen::VectorXd& v) {
            std::vector<std::size_t> sup;
            for (Eigen::Index i = 0; i < n; ++i)
                if (v[i] > 0.0) sup.push_back(static_cast<std::size_t>(i));
            return sup;
        };

        // exact restricted solve on the iterate's support; reference value
        // for the sparsity budget
        w = detail::polish_on_support(q, sigma, support_of(w));
        const double dense_obj = detail::smooth_objective(gram, w, l2);
        const double budget =
            opts.sparsity_slack *
            std::max(gram.centered().trace() / static_cast<double>(j), 1e-300);

        // greedy backward elimination, smallest active weight first
        std::vector<bool> unremovable(j, false);
        while (true) {
            const auto support = support_of(w);
            if (support.size() <= 1) break;
            Eigen::Index victim = -1;
            double smallest = std::numeric_limits<double>::infinity();
            for (std::size_t idx : support) {
                if (unremovable[idx]) continue;
                if (w[static_cast<Eigen::Index>(idx)] < smallest) {
                    smallest = w[static_cast<Eigen::Index>(idx)];
                    victim = static_cast<Eigen::Index>(idx);
                }
            }
            if (victim < 0) break;
            std::vector<std::size_t> reduced;
            for (std::size_t idx : support)
                if (static_cast<Eigen::Index>(idx) != victim) reduced.push_back(idx);
            const Eigen::VectorXd trial = detail::polish_on_support(q, sigma, reduced);
            const double c_victim = (s.row(victim) * trial)(0) - sigma[victim];
            const bool threshold_ok = std::abs(c_victim) <= l1 + 0.25e-6;
            const bool budget_ok =
                detail::smooth_objective(gram, trial, l2) - dense_obj <= budget;
            if (threshold_ok && budget_ok) {
                w = trial;
            } else {
                unremovable[static_cast<std::size_t>(victim)] = true;
            }
        }

        // audit: re-admit zeros violating the soft-threshold bound
        std::vector<bool> attempted(j, false);
        for (std::size_t round = 0; round < j; ++round) {
            const Eigen::VectorXd c = s * w - sigma;
            auto support = support_of(w);
            bool changed = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (w[i] > 0.0 || attempted[static_cast<std::size_t>(i)]) continue;
                if (std::abs(c[i]) > l1 + 0.5e-6) {
                    support.push_back(static_cast<std::size_t>(i));
                    attempted[static_cast<std::size_t>(i)] = true;
                    changed = true;
                }
            }
            if (!changed) break;
            std::sort(support.begin(), support.end());
            w = detail::polish_on_support(q, sigma, support);
        }
    }

    FitResult res{detail::to_weights(w), 0.0, iterations, converged, {}};
    res.active_set = res.weights.active_set();
    res.objective = objective(gram, res.weights, penalty);
    return res;
}

/// Dispatch a penalty configuration to the matching solver.
inline FitResult solve(const GramSystem& gram, const PenaltyConfig& penalty,
                       const SolverOptions& opts = {}) {
    switch (penalty.kind) {
        case PenaltyKind::pure: return solve_pure(gram, opts);
        case PenaltyKind::ridge: return solve_ridge(gram, penalty.lambda, opts);
        default: return solve_enet(gram, penalty, opts);
    }
}

// ---------------------------------------------------------------------------
// Sparsity diagnostics
// ---------------------------------------------------------------------------

struct KktEntry {
    std::size_t index = 0;
    double weight = 0.0;
    /// C_j = <g_j, sum_k w_k g_k - g0>, the correlation of model j's quantile
    /// with the fit error, assembled from the Gram entries.
    double correlation = 0.0;
    double threshold = 0.0;  // lambda * alpha
    bool is_zero = false;
    /// |C_j| <= threshold + slack; the soft-threshold condition under which a
    /// zero weight is stationary. Never satisfiable when lambda*alpha = 0.
    bool within_threshold = false;
};

inline std::vector<KktEntry> kkt_sparsity_check(const GramSystem& gram, const FitResult& result,
                                                const PenaltyConfig& penalty,
                                                double slack = 1e-6) {
    if (result.weights.size() != gram.size())
        throw invalid_input_error("kkt_sparsity_check: dimension mismatch");
    const Eigen::VectorXd w = detail::to_eigen(result.weights);
    const Eigen::VectorXd c = gram.raw() * w - gram.sigma();
    const double thr = penalty.l1_strength();
    std::vector<KktEntry> report(gram.size());
    for (std::size_t i = 0; i < gram.size(); ++i) {
        auto& e = report[i];
        e.index = i;
        e.weight = result.weights[i];
        e.correlation = c[static_cast<Eigen::Index>(i)];
        e.threshold = thr;
        e.is_zero = result.weights[i] == 0.0;
        e.within_threshold = thr > 0.0 && std::abs(e.correlation) <= thr + slack;
    }
    return report;
}

}  // namespace wbar
