#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "wbar/gram.hpp"
#include "wbar/quantile.hpp"
#include "wbar/rng.hpp"
#include "wbar/solver.hpp"

using namespace wbar;

namespace {

// Random calibration instance with the target inside the span of the models,
// the regime the synthetic experiments generate.
struct Instance {
    std::vector<QuantileFunction> models;
    QuantileFunction target;
    GramSystem gram;
};

Instance random_instance(SplitMix64& rng, std::size_t j_max = 3, std::size_t grid_nodes = 300) {
    const std::size_t j = 1 + rng.next_u64() % j_max;
    std::vector<QuantileFunction> models;
    double mean_m = 0.0, mean_s = 0.0;
    for (std::size_t i = 0; i < j; ++i) {
        const double m = rng.next_uniform(-1, 1);
        const double s = rng.next_uniform(0.5, 2.0);
        mean_m += m / static_cast<double>(j);
        mean_s += s / static_cast<double>(j);
        models.push_back(QuantileFunction::normal(m, s));
    }
    auto target = QuantileFunction::normal(mean_m + rng.next_uniform(-0.2, 0.2),
                                           std::max(0.2, mean_s + rng.next_uniform(-0.2, 0.2)));
    const Grid grid(grid_nodes);
    auto gram = gram_system(models, target, grid);
    return Instance{std::move(models), std::move(target), std::move(gram)};
}

// Synthetic Gram triple built directly from random step-function-like
// vectors; always a valid inner-product system.
GramSystem random_gram(SplitMix64& rng, std::size_t j) {
    const std::size_t k = j + 6;
    Eigen::MatrixXd g(j, k);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rng.next_uniform(-1.5, 1.5);
    Eigen::VectorXd g0(k);
    for (Eigen::Index c = 0; c < g0.size(); ++c) g0[c] = rng.next_uniform(-1.5, 1.5);
    const double h = 1.0 / static_cast<double>(k);
    Eigen::MatrixXd s = g * g.transpose() * h;
    s = ((s + s.transpose()) * 0.5).eval();
    return GramSystem(s, g * g0 * h, g0.squaredNorm() * h);
}

double enet_objective_at(const GramSystem& gram, const std::vector<double>& w,
                         const PenaltyConfig& pen) {
    return objective(gram, WeightVector(w), pen);
}

}  // namespace

// ---------------------------------------------------------------------------
// project_simplex
// ---------------------------------------------------------------------------

TEST(ProjectSimplex, TruncateThenRenormalize) {
    const auto w = project_simplex({0.5, -0.2, 0.7});
    EXPECT_NEAR(w[0], 5.0 / 12.0, 1e-15);
    EXPECT_DOUBLE_EQ(w[1], 0.0);
    EXPECT_NEAR(w[2], 7.0 / 12.0, 1e-15);
}

TEST(ProjectSimplex, IdempotentOnSimplexPoints) {
    const std::vector<double> x{0.1, 0.0, 0.6, 0.3};
    const auto w = project_simplex(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(w[i], x[i]);
}

TEST(ProjectSimplex, DegenerateInputThrows) {
    EXPECT_THROW(project_simplex({-1.0, -2.0}), degenerate_projection_error);
    EXPECT_THROW(project_simplex({0.0, 0.0}), degenerate_projection_error);
}

TEST(ProjectSimplex, ZerosStayZero) {
    SplitMix64 rng(5);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(4);
        for (auto& v : x) v = rng.next_uniform(-1, 1);
        x[t % 4] = 0.0;
        if (*std::max_element(x.begin(), x.end()) <= 0.0) continue;
        const auto w = project_simplex(x);
        EXPECT_DOUBLE_EQ(w[t % 4], 0.0);
    }
}

// ---------------------------------------------------------------------------
// objective / lqa_matrix
// ---------------------------------------------------------------------------

TEST(Objective, SingleModelUnpenalized) {
    const Grid grid(200);
    const auto gram = gram_system({QuantileFunction::normal(1, 2)}, QuantileFunction::normal(0, 1),
                                  grid);
    const double got = objective(gram, WeightVector({1.0}), PenaltyConfig::pure());
    EXPECT_NEAR(got, 0.5 * gram.centered()(0, 0), 1e-12);
}

TEST(Objective, LassoPenaltyIsConstantOnSimplex) {
    const Grid grid(100);
    const auto gram = gram_system({QuantileFunction::point_mass(0), QuantileFunction::point_mass(1)},
                                  QuantileFunction::point_mass(0.5), grid);
    const double lambda = 0.7;
    for (const auto& w : {std::vector<double>{0.2, 0.8}, {1.0, 0.0}, {0.5, 0.5}}) {
        const double with = objective(gram, WeightVector(w), PenaltyConfig::lasso(lambda));
        const double without = objective(gram, WeightVector(w), PenaltyConfig::pure());
        EXPECT_NEAR(with - without, lambda, 1e-14);
    }
}

TEST(Objective, ExactHitIsZero) {
    const Grid grid(100);
    const auto gram = gram_system({QuantileFunction::point_mass(0), QuantileFunction::point_mass(10)},
                                  QuantileFunction::point_mass(7), grid);
    EXPECT_NEAR(objective(gram, WeightVector({0.3, 0.7}), PenaltyConfig::pure()), 0.0, 1e-12);
}

TEST(Objective, DimensionMismatchRejected) {
    const Grid grid(100);
    const auto gram = gram_system({QuantileFunction::point_mass(0)}, QuantileFunction::point_mass(1),
                                  grid);
    EXPECT_THROW(objective(gram, WeightVector({0.5, 0.5}), PenaltyConfig::pure()),
                 invalid_input_error);
}

TEST(LqaMatrix, RidgeOnlyCurvature) {
    const auto d = lqa_matrix(WeightVector({0.25, 0.75}), PenaltyConfig::ridge(0.8), 1e-8);
    EXPECT_DOUBLE_EQ(d[0], 0.8);
    EXPECT_DOUBLE_EQ(d[1], 0.8);
}

TEST(LqaMatrix, FrozenBelowEps) {
    const double eps = 1e-8;
    const auto d = lqa_matrix(WeightVector({1e-9, 1.0 - 1e-9}), PenaltyConfig::elastic_net(1.0, 0.5),
                              eps);
    EXPECT_DOUBLE_EQ(d[0], 0.5);  // L1 term frozen, ridge part remains
    EXPECT_NEAR(d[1], 0.5 / (1.0 - 1e-9) + 0.5, 1e-9);
}

TEST(LqaMatrix, DirectFormulaValue) {
    const auto d = lqa_matrix(WeightVector({0.25, 0.75}), PenaltyConfig::elastic_net(1.0, 0.5),
                              1e-8);
    EXPECT_NEAR(d[0], 0.5 / 0.25 + 0.5, 1e-12);
}

// ---------------------------------------------------------------------------
// solve_pure
// ---------------------------------------------------------------------------

TEST(SolvePure, SingleModel) {
    const Grid grid(200);
    const auto gram = gram_system({QuantileFunction::normal(3, 1)}, QuantileFunction::normal(0, 1),
                                  grid);
    const auto fit = solve_pure(gram);
    EXPECT_DOUBLE_EQ(fit.weights[0], 1.0);
    EXPECT_TRUE(fit.converged);
}

TEST(SolvePure, SymmetricPairSplitsEvenly) {
    const Grid grid(500);
    const auto gram = gram_system({QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 1)},
                                  QuantileFunction::normal(0, 1), grid);
    const auto fit = solve_pure(gram);
    EXPECT_NEAR(fit.weights[0], 0.5, 1e-9);
    EXPECT_NEAR(fit.weights[1], 0.5, 1e-9);
}

TEST(SolvePure, TargetEqualsFirstModel) {
    const Grid grid(500);
    const auto gram = gram_system({QuantileFunction::normal(0, 1), QuantileFunction::normal(5, 2)},
                                  QuantileFunction::normal(0, 1), grid);
    const auto fit = solve_pure(gram);
    // brute-force oracle over the 1-simplex at step 1e-4
    const auto oracle = oracles::brute_force_simplex(2, 1e-4, [&](const std::vector<double>& w) {
        return enet_objective_at(gram, w, PenaltyConfig::pure());
    });
    EXPECT_NEAR(fit.weights[0], 1.0, 1e-3);
    EXPECT_NEAR(fit.weights[1], 0.0, 1e-3);
    EXPECT_LE(fit.objective, oracle.value + 1e-8);
}

// ---------------------------------------------------------------------------
// solve_ridge
// ---------------------------------------------------------------------------

TEST(SolveRidge, IdenticalModelsGetUniformWeights) {
    const Grid grid(300);
    std::vector<QuantileFunction> models(4, QuantileFunction::normal(0.5, 1.2));
    const auto gram = gram_system(models, QuantileFunction::normal(0, 1), grid);
    for (double lambda : {0.01, 0.5, 5.0}) {
        const auto fit = solve_ridge(gram, lambda);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(fit.weights[i], 0.25, 1e-9);
    }
}

TEST(SolveRidge, SmallLambdaApproachesPureOnInteriorSolution) {
    const Grid grid(500);
    const auto gram = gram_system({QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 1.5)},
                                  QuantileFunction::normal(-0.2, 1.1), grid);
    const auto pure = solve_pure(gram);
    ASSERT_GT(pure.weights[0], 0.0);
    ASSERT_GT(pure.weights[1], 0.0);
    const auto ridge = solve_ridge(gram, 1e-7);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(ridge.weights[i], pure.weights[i], 1e-4);
}

TEST(SolveRidge, MatchesBruteForceOracle) {
    const Grid grid(400);
    const auto gram = gram_system({QuantileFunction::point_mass(1), QuantileFunction::point_mass(3)},
                                  QuantileFunction::point_mass(2), grid);
    const double lambda = 0.5;
    const auto pen = PenaltyConfig::ridge(lambda);
    const auto fit = solve_ridge(gram, lambda);
    const auto oracle = oracles::brute_force_simplex(2, 1e-4, [&](const std::vector<double>& w) {
        return enet_objective_at(gram, w, pen);
    });
    EXPECT_NEAR(fit.weights[0], oracle.weights[0], 2e-4);
    EXPECT_NEAR(fit.weights[1], oracle.weights[1], 2e-4);
    EXPECT_LE(fit.objective, oracle.value + 1e-8);
}

TEST(SolveRidge, RejectsNonPositiveLambda) {
    const Grid grid(100);
    const auto gram = gram_system({QuantileFunction::point_mass(1)}, QuantileFunction::point_mass(0),
                                  grid);
    EXPECT_THROW(solve_ridge(gram, 0.0), invalid_input_error);
    EXPECT_THROW(solve_ridge(gram, -1.0), invalid_input_error);
}

// ---------------------------------------------------------------------------
// solve_enet
// ---------------------------------------------------------------------------

TEST(SolveEnet, SingleModelConvergesImmediately) {
    const Grid grid(100);
    const auto gram = gram_system({QuantileFunction::normal(2, 1)}, QuantileFunction::normal(0, 1),
                                  grid);
    for (const auto& pen : {PenaltyConfig::pure(), PenaltyConfig::lasso(1.0),
                            PenaltyConfig::elastic_net(0.3, 0.5)}) {
        const auto fit = solve_enet(gram, pen);
        EXPECT_DOUBLE_EQ(fit.weights[0], 1.0);
        EXPECT_TRUE(fit.converged);
        EXPECT_LE(fit.iterations, 2);
    }
}

TEST(SolveEnet, RidgeModeAgreesWithClosedForm) {
    SplitMix64 rng(101);
    for (int t = 0; t < 30; ++t) {
        const auto gram = random_gram(rng, 2 + rng.next_u64() % 7);
        const double lambda = std::pow(10.0, rng.next_uniform(-1, 1));
        const auto iterative = solve_enet(gram, PenaltyConfig::ridge(lambda));
        const auto closed = solve_ridge(gram, lambda);
        ASSERT_TRUE(iterative.converged);
        for (std::size_t i = 0; i < gram.size(); ++i)
            EXPECT_NEAR(iterative.weights[i], closed.weights[i], 1e-6);
    }
}

TEST(SolveEnet, SparseFixtureMatchesOracleAndZerosFarModel) {
    const Grid grid(400);
    const auto gram = gram_system({QuantileFunction::point_mass(0), QuantileFunction::point_mass(5),
                                   QuantileFunction::point_mass(10)},
                                  QuantileFunction::point_mass(2), grid);
    const auto pen = PenaltyConfig::elastic_net(0.2, 0.9);
    const auto fit = solve_enet(gram, pen);
    const auto oracle = oracles::brute_force_simplex(3, 0.01, [&](const std::vector<double>& w) {
        return enet_objective_at(gram, w, pen);
    });
    EXPECT_LE(fit.objective, oracle.value + 1e-4);
    EXPECT_DOUBLE_EQ(fit.weights[2], 0.0);  // the far model is annulled
    EXPECT_GT(fit.weights[0], 0.0);
    EXPECT_GT(fit.weights[1], 0.0);
}

TEST(SolveEnet, ObjectiveMatchesReportedWeights) {
    SplitMix64 rng(303);
    for (int t = 0; t < 20; ++t) {
        const auto inst = random_instance(rng);
        const auto pen = PenaltyConfig::elastic_net(std::pow(10.0, rng.next_uniform(-3, 0.5)),
                                                    rng.next_uniform(0.05, 0.95));
        const auto fit = solve_enet(inst.gram, pen);
        EXPECT_NEAR(fit.objective, objective(inst.gram, fit.weights, pen), 1e-9);
        // active set consistent with the weights
        for (std::size_t i : fit.active_set) EXPECT_GT(fit.weights[i], 0.0);
    }
}

TEST(SolveEnet, DivergenceErrorAdvisesSmallerStep) {
    const Grid grid(300);
    const auto gram = gram_system({QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 2),
                                   QuantileFunction::normal(0.5, 0.7)},
                                  QuantileFunction::normal(0, 1), grid);
    SolverOptions opts;
    opts.eta = 5.0;  // far above 1/L
    EXPECT_THROW(solve_enet(gram, PenaltyConfig::ridge(0.5), opts), step_size_error);
}

// ---------------------------------------------------------------------------
// kkt_sparsity_check
// ---------------------------------------------------------------------------

TEST(KktCheck, NoThresholdWithoutL1) {
    const Grid grid(200);
    const auto gram = gram_system({QuantileFunction::normal(0, 1), QuantileFunction::normal(5, 2)},
                                  QuantileFunction::normal(0, 1), grid);
    const auto fit = solve_pure(gram);
    const auto report = kkt_sparsity_check(gram, fit, PenaltyConfig::pure());
    for (const auto& e : report) EXPECT_FALSE(e.within_threshold);
}

TEST(KktCheck, OrthogonalUselessModelIsFlagged) {
    // the zero-mean Gaussian quantile is L2-orthogonal to constants, so its
    // correlation with a constant residual vanishes
    const Grid grid(2000);
    std::vector<QuantileFunction> models{QuantileFunction::point_mass(1),
                                         QuantileFunction::point_mass(3),
                                         QuantileFunction::normal(0, 1)};
    const auto gram = gram_system(models, QuantileFunction::point_mass(2.2), grid);
    const auto pen = PenaltyConfig::lasso(2.0);
    const auto fit = solve_enet(gram, pen);
    const auto report = kkt_sparsity_check(gram, fit, pen);
    ASSERT_DOUBLE_EQ(fit.weights[2], 0.0);
    EXPECT_TRUE(report[2].is_zero);
    EXPECT_TRUE(report[2].within_threshold);
}

TEST(KktCheck, SparseFixtureZeroSatisfiesCondition) {
    const Grid grid(400);
    const auto gram = gram_system({QuantileFunction::point_mass(0), QuantileFunction::point_mass(5),
                                   QuantileFunction::point_mass(10)},
                                  QuantileFunction::point_mass(2), grid);
    const auto pen = PenaltyConfig::elastic_net(0.2, 0.9);
    const auto fit = solve_enet(gram, pen);
    const auto report = kkt_sparsity_check(gram, fit, pen);
    EXPECT_TRUE(report[2].is_zero);
    EXPECT_TRUE(report[2].within_threshold);
}

TEST(KktCheck, EngineeredStrictComplementarity) {
    // target above the span: residual bounded away from zero, so active
    // weights carry |C_j| > lambda*alpha while the clipped ones stay inside
    const Grid grid(500);
    const auto gram = gram_system({QuantileFunction::point_mass(1), QuantileFunction::point_mass(2),
                                   QuantileFunction::point_mass(-1)},
                                  QuantileFunction::point_mass(2.5), grid);
    const auto pen = PenaltyConfig::lasso(0.6);
    const auto fit = solve_enet(gram, pen);
    const auto report = kkt_sparsity_check(gram, fit, pen);
    for (const auto& e : report) {
        if (e.is_zero)
            EXPECT_TRUE(e.within_threshold) << "index " << e.index;
        else
            EXPECT_FALSE(e.within_threshold) << "index " << e.index;
    }
}

// ---------------------------------------------------------------------------
// Cross-solver properties
// ---------------------------------------------------------------------------

TEST(SolverProperties, SimplexClosureOnRandomFits) {
    SplitMix64 rng(777);
    for (int t = 0; t < 60; ++t) {
        const auto inst = random_instance(rng);
        const double lambda = std::pow(10.0, rng.next_uniform(-4, 1));
        const double alpha = 0.05 * static_cast<double>(rng.next_u64() % 21);
        const auto fit = solve(inst.gram, PenaltyConfig(lambda, alpha));
        double sum = 0.0;
        for (std::size_t i = 0; i < fit.weights.size(); ++i) {
            EXPECT_GE(fit.weights[i], 0.0);
            sum += fit.weights[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(SolverProperties, RidgeAgreementOnRandomGrams) {
    SplitMix64 rng(888);
    for (int t = 0; t < 100; ++t) {
        const auto gram = random_gram(rng, 2 + rng.next_u64() % 9);
        const double lambda = std::pow(10.0, rng.next_uniform(-1, 1));
        const auto a = solve_enet(gram, PenaltyConfig::ridge(lambda));
        const auto b = solve_ridge(gram, lambda);
        double gap = 0.0;
        for (std::size_t i = 0; i < gram.size(); ++i)
            gap = std::max(gap, std::abs(a.weights[i] - b.weights[i]));
        EXPECT_LE(gap, 1e-6);
    }
}

TEST(SolverProperties, OracleEquivalenceOnRandomInstances) {
    SplitMix64 rng(999);
    for (int t = 0; t < 100; ++t) {
        const auto inst = random_instance(rng, 3, 200);
        const double lambda = std::pow(10.0, rng.next_uniform(-4, 1));
        const double alpha = 0.05 * static_cast<double>(rng.next_u64() % 21);
        const PenaltyConfig pen(lambda, alpha);
        const auto fit = solve(inst.gram, pen);
        const auto oracle =
            oracles::brute_force_simplex(inst.gram.size(), 0.01, [&](const std::vector<double>& w) {
                return enet_objective_at(inst.gram, w, pen);
            });
        EXPECT_LE(fit.objective, oracle.value + 1e-4) << "seed case " << t;
    }
}

TEST(SolverProperties, MonotoneSurrogateDescentWithAutoStep) {
    SplitMix64 rng(1234);
    for (int t = 0; t < 50; ++t) {
        const auto inst = random_instance(rng);
        const std::size_t j = inst.gram.size();
        // random reference point and iterate on the simplex
        std::vector<double> raw(j);
        double sum = 0.0;
        for (auto& v : raw) {
            v = rng.next_uniform(0.05, 1.0);
            sum += v;
        }
        for (auto& v : raw) v /= sum;
        const WeightVector w0(raw);
        const PenaltyConfig pen(std::pow(10.0, rng.next_uniform(-3, 0.5)),
                                rng.next_uniform(0.0, 1.0));
        const auto d = lqa_matrix(w0, pen, 1e-8);
        const Eigen::Map<const Eigen::VectorXd> w(raw.data(), static_cast<Eigen::Index>(j));
        auto surrogate = [&](const Eigen::VectorXd& v) {
            return 0.5 * v.dot(inst.gram.raw() * v) + 0.5 * v.dot(d.cwiseProduct(v)) -
                   inst.gram.sigma().dot(v);
        };
        const double eta = 1.0 / (inst.gram.raw().trace() + d.maxCoeff());
        const Eigen::VectorXd grad =
            inst.gram.raw() * w - inst.gram.sigma() + d.cwiseProduct(w);
        const Eigen::VectorXd x = w - eta * grad;
        // the auto step is a Lipschitz bound: the gradient move descends
        EXPECT_LE(surrogate(x), surrogate(w) + 1e-12) << "case " << t;
        // and so does the Euclidean-projected update used on the smooth path
        std::vector<double> xv(x.data(), x.data() + x.size());
        const auto proj = wbar::detail::project_simplex_euclidean(
            xv, wbar::detail::full_support(j));
        const Eigen::Map<const Eigen::VectorXd> y(proj.data(), static_cast<Eigen::Index>(j));
        EXPECT_LE(surrogate(y), surrogate(w) + 1e-12) << "case " << t;
    }
}

TEST(SolverProperties, LambdaContinuityTowardsPure) {
    const Grid grid(400);
    const auto gram = gram_system({QuantileFunction::normal(-1, 1), QuantileFunction::normal(1, 1.4),
                                   QuantileFunction::normal(0.3, 0.8)},
                                  QuantileFunction::normal(0, 1.05), grid);
    const auto pure = solve_pure(gram);
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double lambda : {1e-2, 1e-3, 1e-4}) {
        const auto fit = solve_enet(gram, PenaltyConfig::elastic_net(lambda, 0.5));
        double gap = 0.0;
        for (std::size_t i = 0; i < gram.size(); ++i)
            gap = std::max(gap, std::abs(fit.weights[i] - pure.weights[i]));
        EXPECT_LE(gap, prev_gap + 1e-12);
        prev_gap = gap;
    }
}
