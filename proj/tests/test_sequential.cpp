#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "wbar/quantile.hpp"
#include "wbar/rng.hpp"
#include "wbar/sequential.hpp"

using namespace wbar;

namespace {

// lognormal-ish heavy-tailed panel with mild upward drift
ClaimsPanel synthetic_panel(std::size_t periods, std::size_t claims_per_period,
                            std::uint64_t seed, double drift = 0.03, double shock = 0.0) {
    ClaimsPanel panel;
    for (std::size_t p = 0; p < periods; ++p) {
        auto rng = substream(seed, p);
        ClaimsPeriod period;
        period.label = std::to_string(1972 + p);
        const double mu = std::log(1000.0) + drift * static_cast<double>(p) +
                          (shock > 0.0 && p >= periods / 2 ? shock : 0.0);
        for (std::size_t i = 0; i < claims_per_period; ++i) {
            const double z = detail::inverse_normal_cdf(rng.next_uniform01());
            period.losses.push_back(std::exp(mu + 1.1 * z));
        }
        panel.periods.push_back(std::move(period));
    }
    return panel;
}

SequentialConfig fast_config() {
    SequentialConfig c;
    c.grid = Grid(400, 0.001);
    return c;
}

}  // namespace

TEST(StepFit, SingleModelHistory) {
    SequentialConfig config = fast_config();
    SequentialState state(config, {QuantileFunction::point_mass(1.0)});
    const auto fit = state.step_fit(QuantileFunction::point_mass(5.0));
    ASSERT_EQ(fit.weights.size(), 1u);
    EXPECT_DOUBLE_EQ(fit.weights[0], 1.0);
}

TEST(StepFit, ObservedMatchingOneModelTakesAllWeight) {
    SequentialConfig config = fast_config();
    SequentialState state(config,
                          {QuantileFunction::point_mass(0.0), QuantileFunction::point_mass(10.0)});
    const auto fit = state.step_fit(QuantileFunction::point_mass(10.0));
    EXPECT_NEAR(fit.weights[0], 0.0, 1e-9);
    EXPECT_NEAR(fit.weights[1], 1.0, 1e-9);
}

TEST(StepFit, SymmetricFixtureGivesUniform) {
    SequentialConfig config = fast_config();
    SequentialState state(config,
                          {QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 1)});
    const auto fit = state.step_fit(QuantileFunction::normal(0, 1));
    EXPECT_NEAR(fit.weights[0], 0.5, 1e-3);
    EXPECT_NEAR(fit.weights[1], 0.5, 1e-3);
}

TEST(ExtendWeights, DeltaZeroIgnoresNewest) {
    const auto w = extend_weights(WeightVector({0.3, 0.7}), 0.0);
    EXPECT_DOUBLE_EQ(w[0], 0.3);
    EXPECT_DOUBLE_EQ(w[1], 0.7);
    EXPECT_DOUBLE_EQ(w[2], 0.0);
}

TEST(ExtendWeights, DeltaOnePutsAllMassOnNewest) {
    const auto w = extend_weights(WeightVector({0.3, 0.7}), 1.0);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_DOUBLE_EQ(w[1], 0.0);
    EXPECT_DOUBLE_EQ(w[2], 1.0);
}

TEST(ExtendWeights, DirectFormula) {
    const auto w = extend_weights(WeightVector({0.5, 0.5}), 0.2);
    EXPECT_NEAR(w[0], 0.4, 1e-15);
    EXPECT_NEAR(w[1], 0.4, 1e-15);
    EXPECT_NEAR(w[2], 0.2, 1e-15);
}

TEST(ExtendWeights, AlwaysOnSimplex) {
    SplitMix64 rng(3);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> raw(3);
        double sum = 0;
        for (auto& v : raw) {
            v = rng.next_uniform01();
            sum += v;
        }
        for (auto& v : raw) v /= sum;
        const double delta = rng.next_uniform01();
        const auto w = extend_weights(WeightVector(raw), delta);
        double total = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            EXPECT_GE(w[i], 0.0);
            total += w[i];
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(BiasUpdate, ZeroBiasesKeepZero) {
    SequentialConfig config = fast_config();
    SequentialState state(config, {QuantileFunction::point_mass(1.0)});
    state.bias_update(5.0, 5.0);
    state.bias_update(2.0, 2.0);
    EXPECT_DOUBLE_EQ(state.bias(), 0.0);
}

TEST(BiasUpdate, RhoOneTracksLatestBias) {
    SequentialConfig config = fast_config();
    config.rho = 1.0;
    SequentialState state(config, {QuantileFunction::point_mass(1.0)});
    state.bias_update(5.0, 3.0);
    EXPECT_DOUBLE_EQ(state.bias(), 2.0);
    state.bias_update(1.0, 4.0);
    EXPECT_DOUBLE_EQ(state.bias(), -3.0);
}

TEST(BiasUpdate, EwmaRecursion) {
    SequentialConfig config = fast_config();
    config.rho = 0.5;
    SequentialState state(config, {QuantileFunction::point_mass(1.0)});
    state.bias_update(2.0, 0.0);  // b = 2 -> w0 = 1
    state.bias_update(4.0, 0.0);  // b = 4 -> w0 = 0.5*4 + 0.5*1 = 2.5
    EXPECT_DOUBLE_EQ(state.bias(), 2.5);
    ASSERT_EQ(state.bias_history().size(), 2u);
    EXPECT_DOUBLE_EQ(state.bias_history()[0], 2.0);
    EXPECT_DOUBLE_EQ(state.bias_history()[1], 4.0);
}

TEST(PredictNext, SingleModelNoBias) {
    SequentialConfig config = fast_config();
    const auto model = QuantileFunction::normal(2, 1.5);
    SequentialState state(config, {model});
    const auto pred = state.predict_next();
    for (double s : {0.1, 0.5, 0.9}) EXPECT_DOUBLE_EQ(pred(s), model(s));
}

TEST(PredictNext, ShiftedConvexCombination) {
    SequentialConfig config = fast_config();
    config.delta = 0.5;
    SequentialState state(config, {QuantileFunction::point_mass(0.0)});
    // after advancing, history = {PM(0), PM(10)}, weights = (0.5, 0.5)
    state.step_fit(QuantileFunction::point_mass(10.0));
    state.advance(QuantileFunction::point_mass(10.0), WeightVector({1.0}));
    state.bias_update(1.0, 0.0);  // rho = 0.5 -> w0 = 0.5... use explicit rho
    // recompute with rho = 0.5 default: w0 = 0.5
    const auto pred = state.predict_next();
    EXPECT_DOUBLE_EQ(pred(0.3), 0.5 * 0.0 + 0.5 * 10.0 + state.bias());
}

TEST(PredictNext, MeanIsWeightedMeanPlusBias) {
    SequentialConfig config = fast_config();
    config.delta = 0.25;
    config.rho = 1.0;
    SequentialState state(config,
                          {QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 1)});
    state.advance(QuantileFunction::normal(0.5, 2.0), WeightVector({0.5, 0.5}));
    state.bias_update(3.0, 2.2);  // w0 = 0.8
    const auto pred = state.predict_next();
    const double mean = mean_value(pred, config.grid);
    const double expected = 0.375 * (-1.0) + 0.375 * 1.0 + 0.25 * 0.5 + 0.8;
    EXPECT_NEAR(mean, expected, 1e-6);
}

TEST(RunSequential, WarmupOnlyPanelGivesNoRecords) {
    const auto panel = synthetic_panel(5, 40, 11);
    SequentialConfig config = fast_config();
    config.warmup = 5;
    const auto run = run_sequential(panel, config);
    EXPECT_TRUE(run.records.empty());
    EXPECT_EQ(run.period_labels.size(), 5u);
}

TEST(RunSequential, TooFewPeriodsRejected) {
    const auto panel = synthetic_panel(3, 40, 11);
    SequentialConfig config = fast_config();
    config.warmup = 5;
    EXPECT_THROW(run_sequential(panel, config), invalid_input_error);
}

TEST(RunSequential, DeterministicReplay) {
    const auto panel = synthetic_panel(9, 60, 17);
    SequentialConfig config = fast_config();
    config.warmup = 4;
    config.kind = PenaltyKind::elastic_net;
    config.lambda = 0.5;
    config.alpha = 0.9;
    const auto a = run_sequential(panel, config);
    const auto b = run_sequential(panel, config);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        ASSERT_EQ(a.records[i].fit_weights.size(), b.records[i].fit_weights.size());
        for (std::size_t k = 0; k < a.records[i].fit_weights.size(); ++k)
            EXPECT_DOUBLE_EQ(a.records[i].fit_weights[k], b.records[i].fit_weights[k]);
        EXPECT_DOUBLE_EQ(a.records[i].bias_w0, b.records[i].bias_w0);
        for (std::size_t k = 0; k < a.records[i].predicted_risk.es.size(); ++k)
            EXPECT_DOUBLE_EQ(a.records[i].predicted_risk.es[k], b.records[i].predicted_risk.es[k]);
    }
}

TEST(RunSequential, UnitInvarianceOfWeights) {
    auto panel = synthetic_panel(8, 50, 23);
    SequentialConfig config = fast_config();
    config.warmup = 4;
    const auto base = run_sequential(panel, config);
    for (auto& period : panel.periods)
        for (auto& loss : period.losses) loss *= 1000.0;
    const auto scaled = run_sequential(panel, config);
    ASSERT_EQ(base.records.size(), scaled.records.size());
    for (std::size_t i = 0; i < base.records.size(); ++i) {
        for (std::size_t k = 0; k < base.records[i].fit_weights.size(); ++k)
            EXPECT_NEAR(base.records[i].fit_weights[k], scaled.records[i].fit_weights[k], 1e-12);
        for (std::size_t k = 0; k < base.records[i].predicted_risk.var.size(); ++k)
            EXPECT_NEAR(scaled.records[i].predicted_risk.var[k],
                        1000.0 * base.records[i].predicted_risk.var[k],
                        1e-6 * std::abs(scaled.records[i].predicted_risk.var[k]) + 1e-9);
    }
}

TEST(RunSequential, EnetNoSparserThanPureNever) {
    const auto panel = synthetic_panel(12, 80, 31, 0.05);
    SequentialConfig pure = fast_config();
    pure.warmup = 5;
    const auto pure_run = run_sequential(panel, pure);

    SequentialConfig enet = fast_config();
    enet.warmup = 5;
    enet.kind = PenaltyKind::elastic_net;
    enet.lambda = 0.5;
    enet.alpha = 0.9;
    const auto enet_run = run_sequential(panel, enet);

    auto actives = [](const std::vector<double>& w) {
        std::size_t n = 0;
        for (double v : w)
            if (v > 0.0) ++n;
        return n;
    };
    const auto& pw = pure_run.records.back().fit_weights;
    const auto& ew = enet_run.records.back().fit_weights;
    EXPECT_LE(actives(ew), actives(pw));
}

TEST(RunSequential, RiskReportsAreCoherent) {
    const auto panel = synthetic_panel(9, 70, 41);
    SequentialConfig config = fast_config();
    config.warmup = 5;
    const auto run = run_sequential(panel, config);
    for (const auto& rec : run.records) {
        for (std::size_t k = 0; k < rec.predicted_risk.levels.size(); ++k) {
            const double slack = 1e-9 * (1.0 + std::abs(rec.realized_risk.var[k]));
            EXPECT_GE(rec.predicted_risk.es[k], rec.predicted_risk.var[k] - slack);
            EXPECT_GE(rec.fitted_risk.es[k], rec.fitted_risk.var[k] - slack);
            EXPECT_GE(rec.realized_risk.es[k], rec.realized_risk.var[k] - slack);
            EXPECT_GT(rec.predicted_risk.var[k], 0.0);
        }
        EXPECT_NEAR(rec.bias, rec.realized_mean - rec.predicted_mean, 1e-9);
    }
}

TEST(TuneDelta, SingleCandidateReturned) {
    const auto panel = synthetic_panel(8, 40, 53);
    EXPECT_DOUBLE_EQ(tune_delta(panel, {0.35}, 4, fast_config()), 0.35);
}

TEST(TuneDelta, StationaryPanelPrefersSmallestOnTies) {
    // identical periods: every delta gives an identical prediction sequence
    ClaimsPanel panel;
    std::vector<double> losses;
    auto rng = substream(97, 0);
    for (int i = 0; i < 50; ++i) losses.push_back(std::exp(rng.next_uniform(-1, 1)));
    for (int p = 0; p < 8; ++p) panel.periods.push_back({std::to_string(1980 + p), losses});
    const double chosen = tune_delta(panel, {0.6, 0.2, 0.9}, 4, fast_config());
    EXPECT_DOUBLE_EQ(chosen, 0.2);
}

TEST(TuneDelta, RegimeShiftFavorsLargerDelta) {
    // distribution flips sharply halfway: recent periods are the only guide
    const auto panel = synthetic_panel(12, 120, 61, 0.0, 1.5);
    const double chosen = tune_delta(panel, {0.05, 0.8}, 4, fast_config());
    EXPECT_DOUBLE_EQ(chosen, 0.8);
}

TEST(TuneDelta, InsufficientPeriodsRejected) {
    const auto panel = synthetic_panel(4, 30, 71);
    EXPECT_THROW(tune_delta(panel, {0.2}, 4, fast_config()), invalid_input_error);
    EXPECT_THROW(tune_delta(panel, {}, 2, fast_config()), invalid_input_error);
}
