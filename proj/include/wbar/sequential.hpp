#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wbar/claims.hpp"
#include "wbar/errors.hpp"
#include "wbar/gram.hpp"
#include "wbar/quantile.hpp"
#include "wbar/risk.hpp"
#include "wbar/solver.hpp"
#include "wbar/tuning.hpp"

namespace wbar {

/// Configuration of the one-step-ahead claims forecasting workflow.
struct SequentialConfig {
    PenaltyKind kind = PenaltyKind::pure;
    /// Fixed penalty strength; empty means per-period grid search for the
    /// penalized kinds.
    std::optional<double> lambda;
    std::optional<double> alpha;  // only consulted for the elastic net kind
    TuningGrid tuning = TuningGrid::defaults();
    double delta = 0.2;
    double rho = 0.5;
    std::size_t warmup = 5;
    Grid grid{1000, 0.001};
    SolverOptions solver = sequential_solver_defaults();
    std::vector<double> risk_levels = default_risk_levels();

    static SolverOptions sequential_solver_defaults() {
        SolverOptions o;
        o.tol = 1e-8;
        o.max_iter = 5000;
        // claims-panel quantiles are strongly correlated across years, so
        // parsimony is cheap; allow a larger share of the fit scale for
        // thresholding zeros than the library-wide default
        o.sparsity_slack = 1e-2;
        return o;
    }

    void validate() const {
        if (!(delta >= 0.0 && delta <= 1.0))
            throw invalid_input_error("SequentialConfig: delta must lie in [0,1]");
        if (!(rho > 0.0 && rho <= 1.0))
            throw invalid_input_error("SequentialConfig: rho must lie in (0,1]");
        if (warmup < 2) throw invalid_input_error("SequentialConfig: warmup must be >= 2");
        if (lambda && !(*lambda >= 0.0))
            throw invalid_input_error("SequentialConfig: lambda must be >= 0");
        if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0))
            throw invalid_input_error("SequentialConfig: alpha must lie in [0,1]");
    }

    /// Alpha grid implied by the penalty kind when tuning per period.
    std::vector<double> tuning_alphas() const {
        switch (kind) {
            case PenaltyKind::lasso: return {1.0};
            case PenaltyKind::ridge: return {0.0};
            default: return tuning.alphas;
        }
    }
};

/// Weights fitted at one sequential step together with the penalty used.
struct StepFit {
    WeightVector weights;
    double lambda = 0.0;
    double alpha = 0.0;
    int iterations = 0;
    bool converged = true;
};

/// Expanding state of the forecasting workflow: observed per-period quantile
/// models, the current extended weights, and the bias-correction recursion.
class SequentialState {
  public:
    SequentialState(SequentialConfig config, std::vector<QuantileFunction> initial_history)
        : config_(std::move(config)), history_(std::move(initial_history)) {
        config_.validate();
        if (history_.empty())
            throw invalid_input_error("SequentialState: need at least one observed period");
        current_weights_ = WeightVector::uniform(history_.size());
    }

    const SequentialConfig& config() const { return config_; }
    const std::vector<QuantileFunction>& history() const { return history_; }
    const WeightVector& current_weights() const { return current_weights_; }
    double bias() const { return bias_w0_; }
    const std::vector<double>& bias_history() const { return bias_history_; }

    /// Calibrate the barycenter of the current history to a newly observed
    /// period: the workflow's per-period fitting problem. Pure kind solves
    /// the unpenalized problem; penalized kinds use the fixed (lambda, alpha)
    /// when configured and a per-period grid search otherwise.
    StepFit step_fit(const QuantileFunction& observed) const {
        const GramSystem gram = gram_system(history_, observed, config_.grid);
        if (config_.kind == PenaltyKind::pure) {
            const FitResult fit = solve_pure(gram, config_.solver);
            return {fit.weights, 0.0, 0.0, fit.iterations, fit.converged};
        }
        if (config_.lambda) {
            const double a = config_.kind == PenaltyKind::lasso    ? 1.0
                             : config_.kind == PenaltyKind::ridge ? 0.0
                                                                  : config_.alpha.value_or(0.5);
            const PenaltyConfig pen(*config_.lambda, a);
            const FitResult fit = solve(gram, pen, config_.solver);
            return {fit.weights, pen.lambda, pen.alpha, fit.iterations, fit.converged};
        }
        TuningGrid cells = config_.tuning;
        cells.alphas = config_.tuning_alphas();
        const TuningResult tuned =
            grid_search_grams(gram, gram.sigma(), gram.sigma0_sq(), cells, config_.solver);
        return {tuned.fit.weights, tuned.lambda, tuned.alpha, tuned.fit.iterations,
                tuned.fit.converged};
    }

    /// Append the observed period and extend the fitted weights with the
    /// delta share for the newest model.
    void advance(QuantileFunction observed, const WeightVector& fitted) {
        if (fitted.size() != history_.size())
            throw invalid_input_error("SequentialState: fitted weights do not match history");
        history_.push_back(std::move(observed));
        current_weights_ = extend_weights(fitted, config_.delta);
    }

    /// EWMA bias-correction update: b_j = realized - predicted,
    /// w0 <- rho b_j + (1-rho) w0. Returns the new w0 and appends b_j.
    double bias_update(double realized_mean, double predicted_mean) {
        if (!std::isfinite(realized_mean) || !std::isfinite(predicted_mean))
            throw invalid_input_error("bias_update: non-finite mean");
        const double b = realized_mean - predicted_mean;
        bias_history_.push_back(b);
        bias_w0_ = config_.rho * b + (1.0 - config_.rho) * bias_w0_;
        return bias_w0_;
    }

    /// One-step-ahead predictive quantile: the bias shift plus the weighted
    /// history quantiles.
    QuantileFunction predict_next() const {
        return QuantileFunction::combination(history_, current_weights_, bias_w0_);
    }

    /// Re-weight by (1-delta) and give the newest model the delta share.
    static WeightVector extend_weights(const WeightVector& fitted, double delta) {
        if (!(delta >= 0.0 && delta <= 1.0))
            throw invalid_input_error("extend_weights: delta must lie in [0,1]");
        std::vector<double> w;
        w.reserve(fitted.size() + 1);
        for (std::size_t i = 0; i < fitted.size(); ++i) w.push_back(fitted[i] * (1.0 - delta));
        w.push_back(delta);
        // guard against accumulated rounding so the simplex invariant is exact
        double sum = 0.0;
        for (double v : w) sum += v;
        if (sum > 0.0 && std::abs(sum - 1.0) > 1e-15)
            for (double& v : w) v /= sum;
        return WeightVector(std::move(w));
    }

  private:
    SequentialConfig config_;
    std::vector<QuantileFunction> history_;
    WeightVector current_weights_{std::vector<double>{1.0}};
    double bias_w0_ = 0.0;
    std::vector<double> bias_history_;
};

inline WeightVector extend_weights(const WeightVector& fitted, double delta) {
    return SequentialState::extend_weights(fitted, delta);
}

// ---------------------------------------------------------------------------
// Full panel replay
// ---------------------------------------------------------------------------

struct SequentialPeriodRecord {
    std::string label;
    /// Weights fitted to this period over all preceding periods.
    std::vector<double> fit_weights;
    /// Extended weights (1-delta scaled plus the delta share for this
    /// period); the weights behind the next prediction.
    std::vector<double> extended_weights;
    double lambda = 0.0;
    double alpha = 0.0;
    double realized_mean = 0.0;
    double predicted_mean = 0.0;
    double bias = 0.0;     // realized - predicted for this period
    double bias_w0 = 0.0;  // EWMA state after this period
    RiskReport fitted_risk;     // risk of the fitted barycenter
    RiskReport predicted_risk;  // risk of the prediction made one period earlier
    RiskReport realized_risk;   // risk of the observed empirical model
};

struct SequentialRun {
    std::vector<std::string> period_labels;  // all panel periods
    std::size_t warmup = 0;
    double scale = 1.0;  // loss scale divided out before fitting
    std::vector<SequentialPeriodRecord> records;  // validation periods only
};

namespace detail {

inline RiskReport scale_report(RiskReport r, double scale) {
    for (auto& v : r.var) v *= scale;
    for (auto& v : r.es) v *= scale;
    return r;
}

}  // namespace detail

/// Replay a claims panel through the sequential workflow: per period, fit
/// weights to the newly observed distribution, extend with the delta share,
/// update the bias correction, and form the next one-step-ahead prediction.
/// Losses are fitted in units of the warmup-period mean so penalty strengths
/// are data-scale-free; risk outputs are rescaled to original units.
inline SequentialRun run_sequential(const ClaimsPanel& panel, const SequentialConfig& config) {
    config.validate();
    panel.validate();
    // a warmup-only panel yields an empty validation table; fewer periods
    // cannot even bootstrap the first fit
    if (panel.size() < config.warmup)
        throw invalid_input_error("run_sequential: panel needs at least warmup=" +
                                  std::to_string(config.warmup) + " periods");

    // scale from warmup periods only: later periods must not leak backwards
    double scale_acc = 0.0;
    std::size_t scale_n = 0;
    for (std::size_t p = 0; p < config.warmup; ++p) {
        for (double x : panel.periods[p].losses) scale_acc += x;
        scale_n += panel.periods[p].losses.size();
    }
    const double scale = scale_acc > 0.0 ? scale_acc / static_cast<double>(scale_n) : 1.0;

    std::vector<QuantileFunction> observed;
    observed.reserve(panel.size());
    for (const auto& period : panel.periods) {
        std::vector<double> scaled = period.losses;
        for (double& x : scaled) x /= scale;
        observed.push_back(empirical_quantile(scaled));
    }

    SequentialRun run;
    run.warmup = config.warmup;
    run.scale = scale;
    for (const auto& period : panel.periods) run.period_labels.push_back(period.label);

    // initialize with the first warmup-1 periods, fit to the last warmup
    // period, and form the first prediction
    std::vector<QuantileFunction> init(observed.begin(),
                                       observed.begin() + static_cast<std::ptrdiff_t>(config.warmup) - 1);
    SequentialState state(config, std::move(init));
    {
        const StepFit boot = state.step_fit(observed[config.warmup - 1]);
        state.advance(observed[config.warmup - 1], boot.weights);
    }
    QuantileFunction prediction = state.predict_next();

    for (std::size_t p = config.warmup; p < panel.size(); ++p) {
        const QuantileFunction& now = observed[p];
        SequentialPeriodRecord rec;
        rec.label = panel.periods[p].label;

        rec.predicted_mean = mean_value(prediction, config.grid) * scale;
        rec.realized_mean = mean_value(now, config.grid) * scale;
        rec.predicted_risk =
            detail::scale_report(risk_report(prediction, config.grid, config.risk_levels), scale);
        rec.realized_risk =
            detail::scale_report(risk_report(now, config.grid, config.risk_levels), scale);
        rec.bias = rec.realized_mean - rec.predicted_mean;
        rec.bias_w0 = state.bias_update(rec.realized_mean / scale, rec.predicted_mean / scale) *
                      scale;

        const StepFit fit = state.step_fit(now);
        rec.fit_weights = fit.weights.values();
        rec.lambda = fit.lambda;
        rec.alpha = fit.alpha;
        const auto fitted = barycenter_quantile(state.history(), fit.weights);
        rec.fitted_risk =
            detail::scale_report(risk_report(fitted, config.grid, config.risk_levels), scale);

        state.advance(now, fit.weights);
        rec.extended_weights = state.current_weights().values();
        prediction = state.predict_next();
        run.records.push_back(std::move(rec));
    }
    return run;
}

/// Back-validation choice of delta: replay the panel for each candidate and
/// pick the delta minimizing the mean one-step-ahead squared distance between
/// prediction and observation; ties go to the smaller delta.
inline double tune_delta(const ClaimsPanel& panel, std::vector<double> candidates,
                         std::size_t warmup, SequentialConfig config = {}) {
    if (candidates.empty()) throw invalid_input_error("tune_delta: no candidates");
    panel.validate();
    if (panel.size() <= warmup)
        throw invalid_input_error("tune_delta: panel needs more periods than warmup");
    std::sort(candidates.begin(), candidates.end());
    config.warmup = warmup;

    double scale_acc = 0.0;
    std::size_t scale_n = 0;
    for (std::size_t p = 0; p < warmup; ++p) {
        for (double x : panel.periods[p].losses) scale_acc += x;
        scale_n += panel.periods[p].losses.size();
    }
    const double scale = scale_acc > 0.0 ? scale_acc / static_cast<double>(scale_n) : 1.0;
    std::vector<QuantileFunction> observed;
    for (const auto& period : panel.periods) {
        std::vector<double> scaled = period.losses;
        for (double& x : scaled) x /= scale;
        observed.push_back(empirical_quantile(scaled));
    }

    double best_delta = 0.0;
    double best_score = std::numeric_limits<double>::infinity();
    bool have = false;
    for (double delta : candidates) {
        if (!(delta >= 0.0 && delta <= 1.0))
            throw invalid_input_error("tune_delta: candidates must lie in [0,1]");
        SequentialConfig c = config;
        c.delta = delta;
        std::vector<QuantileFunction> init(
            observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(warmup) - 1);
        SequentialState state(c, std::move(init));
        const StepFit boot = state.step_fit(observed[warmup - 1]);
        state.advance(observed[warmup - 1], boot.weights);
        QuantileFunction prediction = state.predict_next();
        double score = 0.0;
        for (std::size_t q = warmup; q < panel.size(); ++q) {
            score += wasserstein2_squared(prediction, observed[q], c.grid);
            state.bias_update(mean_value(observed[q], c.grid), mean_value(prediction, c.grid));
            const StepFit fit = state.step_fit(observed[q]);
            state.advance(observed[q], fit.weights);
            prediction = state.predict_next();
        }
        score /= static_cast<double>(panel.size() - warmup);
        // scores within rounding noise count as ties, won by the smaller delta
        if (!have || score < best_score - 1e-12 * (1.0 + best_score)) {
            have = true;
            best_score = score;
            best_delta = delta;
        }
    }
    return best_delta;
}

}  // namespace wbar
