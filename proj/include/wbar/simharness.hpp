#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/gram.hpp"
#include "wbar/quantile.hpp"
#include "wbar/rng.hpp"
#include "wbar/solver.hpp"
#include "wbar/tuning.hpp"

namespace wbar {

enum class Family { normal, weibull };
enum class Method { pure, lasso, ridge, enet };

inline const char* to_string(Family f) { return f == Family::normal ? "normal" : "weibull"; }
inline const char* to_string(Method m) {
    switch (m) {
        case Method::pure: return "pure";
        case Method::lasso: return "lasso";
        case Method::ridge: return "ridge";
        case Method::enet: return "enet";
    }
    return "?";
}

/// Normal scheme: model means from Unif(-c, c), sigmas from Unif(a, b).
/// Defaults keep the noisy parameters bracketing the true ones with high
/// probability, the regime where averaging can recover the target.
struct NormalNoise {
    double c = 0.6, a = 0.7, b = 1.3;
};

/// Weibull scheme: shape and scale multipliers from Unif(a1,b1), Unif(a2,b2).
struct WeibullNoise {
    double a1 = 0.85, b1 = 1.15, a2 = 0.85, b2 = 1.15;
};

struct ExperimentConfig {
    Family family = Family::normal;
    double normal_mean = 0.0, normal_sigma = 1.0;
    double weibull_shape = 1.0, weibull_scale = 1.0;
    std::size_t num_models = 5;    // J
    std::size_t sample_size = 100; // n
    std::size_t replications = 200;
    NormalNoise normal_noise;
    WeibullNoise weibull_noise;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::pure, Method::lasso, Method::ridge, Method::enet};
    TuningGrid tuning = harness_tuning_defaults();
    Grid grid{1000};
    SolverOptions solver = harness_solver_defaults();
    unsigned threads = 0;  // 0 = hardware concurrency
    /// Random half-splits of the target sample used by the tuning criterion.
    std::size_t cv_splits = 8;
    /// Cells whose risk estimate lies within this relative tolerance of the
    /// minimum count as ties, won by the stronger regularization.
    double cv_tie_tolerance = 0.05;

    static SolverOptions harness_solver_defaults() {
        SolverOptions o;
        o.tol = 1e-7;
        o.max_iter = 2000;
        return o;
    }

    /// Same lambda grid as the generic default; a coarser alpha grid keeps
    /// the per-replication elastic-net search affordable.
    static TuningGrid harness_tuning_defaults() {
        TuningGrid g = TuningGrid::defaults();
        g.alphas.clear();
        for (int i = 0; i <= 10; ++i) g.alphas.push_back(0.1 * i);
        return g;
    }

    void validate() const {
        if (num_models < 1 || sample_size < 1 || replications < 1)
            throw invalid_input_error("ExperimentConfig: J, n, B must be >= 1");
        if (methods.empty()) throw invalid_input_error("ExperimentConfig: no methods selected");
        if (family == Family::normal) {
            if (!(normal_noise.c > 0.0) || !(normal_noise.a > 0.0 && normal_noise.a < 1.0) ||
                !(normal_noise.b > 1.0))
                throw invalid_input_error(
                    "ExperimentConfig: normal scheme needs c > 0, a in (0,1), b > 1");
            if (!(normal_sigma > 0.0))
                throw invalid_input_error("ExperimentConfig: normal sigma must be > 0");
        } else {
            const auto& wn = weibull_noise;
            if (!(wn.a1 > 0.0 && wn.a1 < 1.0) || !(wn.a2 > 0.0 && wn.a2 < 1.0) ||
                !(wn.b1 > 0.0) || !(wn.b2 > 0.0))
                throw invalid_input_error(
                    "ExperimentConfig: weibull scheme needs a1,a2 in (0,1), b1,b2 > 0");
            if (!(weibull_shape > 0.0) || !(weibull_scale > 0.0))
                throw invalid_input_error("ExperimentConfig: weibull parameters must be > 0");
        }
        tuning.validate();
        solver.validate();
    }

    QuantileFunction true_model() const {
        return family == Family::normal ? QuantileFunction::normal(normal_mean, normal_sigma)
                                        : QuantileFunction::weibull(weibull_shape, weibull_scale);
    }
};

struct MethodStats {
    Method method = Method::pure;
    double mean_w2 = 0.0;
    double se_w2 = 0.0;
    // deviation from the pure-barycenter weights; penalized methods only
    std::optional<double> mean_dw, std_dw, mean_lambda, mean_alpha;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<MethodStats> rows;
    std::size_t dropped_replications = 0;
};

/// Draw the noisy model set around the true model. The true model's
/// parameters are disturbed with uniform noise; Weibull shapes and scales
/// stay strictly positive by the bounds on the multipliers.
inline std::pair<QuantileFunction, std::vector<QuantileFunction>> generate_model_set(
    const ExperimentConfig& config, SplitMix64& rng) {
    std::vector<QuantileFunction> models;
    models.reserve(config.num_models);
    if (config.family == Family::normal) {
        for (std::size_t jm = 0; jm < config.num_models; ++jm) {
            const double m = rng.next_uniform(-config.normal_noise.c, config.normal_noise.c);
            const double s = rng.next_uniform(config.normal_noise.a, config.normal_noise.b);
            models.push_back(QuantileFunction::normal(config.normal_mean + m, s));
        }
    } else {
        for (std::size_t jm = 0; jm < config.num_models; ++jm) {
            const double u1 = rng.next_uniform(config.weibull_noise.a1, config.weibull_noise.b1);
            const double u2 = rng.next_uniform(config.weibull_noise.a2, config.weibull_noise.b2);
            models.push_back(
                QuantileFunction::weibull(config.weibull_shape * u1, config.weibull_scale * u2));
        }
    }
    return {config.true_model(), std::move(models)};
}

namespace detail {

struct ReplicationOutcome {
    bool ok = false;
    std::string error;
    // indexed like config.methods
    std::vector<double> w2;
    std::vector<double> dw;
    std::vector<double> lambda;
    std::vector<double> alpha;
};

inline Eigen::VectorXd grid_values(const QuantileFunction& q, const Grid& grid) {
    const auto vals = evaluate_on_grid(q, grid, "run_experiment");
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline ReplicationOutcome run_replication(const ExperimentConfig& config, std::size_t rep) {
    ReplicationOutcome out;
    auto rng = substream(config.seed, rep);
    const auto [true_q, models] = generate_model_set(config, rng);
    const double h = config.grid.step();
    const Eigen::Index jn = static_cast<Eigen::Index>(config.num_models);

    std::vector<double> target_sample(config.sample_size);
    for (auto& x : target_sample) x = true_q(rng.next_uniform01());
    std::vector<std::vector<double>> model_samples(config.num_models);
    for (std::size_t jm = 0; jm < config.num_models; ++jm) {
        model_samples[jm].resize(config.sample_size);
        for (auto& x : model_samples[jm]) x = models[jm](rng.next_uniform01());
    }

    // model rows on the grid and the per-model quantile noise level
    // nu_j ~ E||ghat_j - g_j||^2, estimated from within-model half splits
    Eigen::MatrixXd g(jn, static_cast<Eigen::Index>(config.grid.size()));
    Eigen::VectorXd nu(jn);
    for (std::size_t jm = 0; jm < config.num_models; ++jm) {
        g.row(static_cast<Eigen::Index>(jm)) =
            grid_values(empirical_quantile(model_samples[jm]), config.grid).transpose();
        std::vector<double> half_a, half_b;
        for (std::size_t i = 0; i < model_samples[jm].size(); ++i)
            (i % 2 == 0 ? half_a : half_b).push_back(model_samples[jm][i]);
        if (half_a.empty() || half_b.empty()) {
            nu[static_cast<Eigen::Index>(jm)] = 0.0;
        } else {
            nu[static_cast<Eigen::Index>(jm)] =
                (grid_values(empirical_quantile(half_a), config.grid) -
                 grid_values(empirical_quantile(half_b), config.grid))
                    .squaredNorm() *
                h / 4.0;
        }
    }
    const Eigen::VectorXd target = grid_values(empirical_quantile(target_sample), config.grid);
    const Eigen::VectorXd truth = grid_values(true_q, config.grid);

    Eigen::MatrixXd s_g = (g * g.transpose()) * h;
    s_g = ((s_g + s_g.transpose()) * 0.5).eval();
    const GramSystem gram_full(s_g, g * target * h, target.squaredNorm() * h);

    // repeated random half-splits of the target sample for the tuning
    // criterion, derived deterministically from the replication index
    const std::size_t splits = std::max<std::size_t>(1, config.cv_splits);
    std::vector<GramSystem> fold_grams;
    std::vector<Eigen::VectorXd> fold_values;
    if (config.sample_size >= 2) {
        for (std::size_t split = 0; split < 2 * splits; split += 2) {
            auto srng = substream(derive_stream_key(config.seed, rep) ^ 0x5D5ULL, split);
            std::vector<std::size_t> perm(config.sample_size);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            for (std::size_t i = perm.size(); i-- > 1;)
                std::swap(perm[i], perm[srng.next_u64() % (i + 1)]);
            std::vector<double> half_a, half_b;
            for (std::size_t i = 0; i < perm.size(); ++i)
                (i < perm.size() / 2 ? half_a : half_b).push_back(target_sample[perm[i]]);
            for (const auto& half : {half_a, half_b}) {
                fold_values.push_back(grid_values(empirical_quantile(half), config.grid));
                fold_grams.emplace_back(s_g, g * fold_values.back() * h,
                                        fold_values.back().squaredNorm() * h);
            }
        }
    }

    const FitResult pure_fit = solve_pure(gram_full, config.solver);
    const Eigen::VectorXd w_pure = detail::to_eigen(pure_fit.weights);
    auto w2_to_truth = [&](const Eigen::VectorXd& w) {
        return std::sqrt((g.transpose() * w - truth).squaredNorm() * h);
    };

    out.w2.assign(config.methods.size(), 0.0);
    out.dw.assign(config.methods.size(), 0.0);
    out.lambda.assign(config.methods.size(), 0.0);
    out.alpha.assign(config.methods.size(), 0.0);

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        const Method method = config.methods[mi];
        if (method == Method::pure) {
            out.w2[mi] = w2_to_truth(w_pure);
            continue;
        }
        TuningGrid cells = config.tuning;
        switch (method) {
            case Method::lasso: cells.alphas = {1.0}; break;
            case Method::ridge: cells.alphas = {0.0}; break;
            default: break;
        }
        // Per-replication grid search. The criterion is a risk estimate with
        // two parts: the cross-validated distance to held-out target halves,
        // plus the model-noise exposure sum_j w_j^2 nu_j of the full-sample
        // fit (the folds share the empirical models, so concentration risk
        // on noisy model quantiles is invisible to the split alone). Cells
        // within the tie tolerance of the minimum go to the stronger
        // regularization, mirroring the grid-search tie rule.
        struct Cell {
            double score, lambda, alpha;
        };
        std::vector<Cell> scored;
        for (double lambda : cells.lambdas) {
            for (double alpha : cells.alphas) {
                const PenaltyConfig pen(lambda, alpha);
                double score = 0.0;
                for (std::size_t f = 0; f + 1 < fold_grams.size(); f += 2) {
                    const Eigen::VectorXd wa =
                        detail::to_eigen(solve(fold_grams[f], pen, config.solver).weights);
                    const Eigen::VectorXd wb =
                        detail::to_eigen(solve(fold_grams[f + 1], pen, config.solver).weights);
                    score += (g.transpose() * wa - fold_values[f + 1]).squaredNorm() * h;
                    score += (g.transpose() * wb - fold_values[f]).squaredNorm() * h;
                }
                score /= static_cast<double>(std::max<std::size_t>(1, fold_grams.size()));
                const Eigen::VectorXd w =
                    detail::to_eigen(solve(gram_full, pen, config.solver).weights);
                score += w.cwiseProduct(w).dot(nu);
                scored.push_back({score, lambda, alpha});
            }
        }
        double min_score = scored.front().score;
        for (const Cell& cell : scored) min_score = std::min(min_score, cell.score);
        CellSelector best;
        for (const Cell& cell : scored)
            if (cell.score <= min_score * (1.0 + config.cv_tie_tolerance))
                best.offer(min_score, cell.lambda, cell.alpha);
        const PenaltyConfig chosen(best.lambda, best.alpha);
        const Eigen::VectorXd w = detail::to_eigen(solve(gram_full, chosen, config.solver).weights);
        out.w2[mi] = w2_to_truth(w);
        out.dw[mi] = (w - w_pure).norm();
        out.lambda[mi] = best.lambda;
        out.alpha[mi] = best.alpha;
    }
    out.ok = true;
    return out;
}

}  // namespace detail

/// Monte Carlo assessment of the averaging methods: per replication, draw a
/// model set and samples, fit every requested method (penalized methods with
/// a per-replication cross-validated grid search), and record the distance
/// of each aggregate from the true model plus the weight deviation from the
/// pure barycenter. Replications run on substreams indexed by replication
/// number, so any thread count produces the identical report.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::size_t b = config.replications;
    std::vector<detail::ReplicationOutcome> outcomes(b);

    unsigned threads = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(b)));
    if (threads == 1) {
        for (std::size_t r = 0; r < b; ++r) {
            try {
                outcomes[r] = detail::run_replication(config, r);
            } catch (const std::exception& e) {
                outcomes[r].ok = false;
                outcomes[r].error = e.what();
            }
        }
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t r = t; r < b; r += threads) {
                    try {
                        outcomes[r] = detail::run_replication(config, r);
                    } catch (const std::exception& e) {
                        outcomes[r].ok = false;
                        outcomes[r].error = e.what();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    std::size_t dropped = 0;
    std::string first_error;
    for (const auto& o : outcomes)
        if (!o.ok) {
            ++dropped;
            if (first_error.empty()) first_error = o.error;
        }
    if (static_cast<double>(dropped) > 0.01 * static_cast<double>(b))
        throw numeric_error("run_experiment: " + std::to_string(dropped) + "/" +
                            std::to_string(b) + " replications failed; first error: " +
                            first_error);

    ExperimentReport report;
    report.config = config;
    report.dropped_replications = dropped;
    const double used = static_cast<double>(b - dropped);

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        MethodStats stats;
        stats.method = config.methods[mi];
        double sum = 0.0;
        for (const auto& o : outcomes)
            if (o.ok) sum += o.w2[mi];
        stats.mean_w2 = sum / used;
        double ss = 0.0;
        for (const auto& o : outcomes)
            if (o.ok) ss += (o.w2[mi] - stats.mean_w2) * (o.w2[mi] - stats.mean_w2);
        stats.se_w2 = used > 1.0 ? std::sqrt(ss / (used - 1.0)) / std::sqrt(used) : 0.0;
        if (stats.method != Method::pure) {
            double dsum = 0.0, lsum = 0.0, asum = 0.0;
            for (const auto& o : outcomes)
                if (o.ok) {
                    dsum += o.dw[mi];
                    lsum += o.lambda[mi];
                    asum += o.alpha[mi];
                }
            const double dmean = dsum / used;
            double dss = 0.0;
            for (const auto& o : outcomes)
                if (o.ok) dss += (o.dw[mi] - dmean) * (o.dw[mi] - dmean);
            stats.mean_dw = dmean;
            stats.std_dw = used > 1.0 ? std::sqrt(dss / (used - 1.0)) : 0.0;
            stats.mean_lambda = lsum / used;
            if (stats.method == Method::enet) stats.mean_alpha = asum / used;
        }
        report.rows.push_back(std::move(stats));
    }
    return report;
}

struct RankedMethod {
    Method method = Method::pure;
    double mean_w2 = 0.0;
    bool winner = false;
};

/// Rank methods by mean distance, ties kept in declaration order
/// (pure, lasso, ridge, enet); the winner is flagged.
inline std::vector<RankedMethod> compare_methods(const ExperimentReport& report) {
    if (report.rows.size() < 2)
        throw invalid_input_error("compare_methods: need at least two methods");
    std::vector<RankedMethod> ranked;
    for (const auto& row : report.rows) ranked.push_back({row.method, row.mean_w2, false});
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedMethod& x, const RankedMethod& y) {
        if (x.mean_w2 != y.mean_w2) return x.mean_w2 < y.mean_w2;
        return static_cast<int>(x.method) < static_cast<int>(y.method);
    });
    ranked.front().winner = true;
    return ranked;
}

}  // namespace wbar
