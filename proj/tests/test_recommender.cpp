/* Copyright 2026 The datamin Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "datamin/dataset.hpp"
#include "datamin/experiment.hpp"
#include "datamin/recommender.hpp"
#include "support.hpp"

namespace datamin {
namespace {

using testing::Gen;

FactorModel constant_model(std::size_t rank, double mean) { return FactorModel(rank, mean); }

// ---------------------------------------------------------------------------
// predict

TEST(Predict, ZeroParametersGiveGlobalMean) {
    FactorModel m(2, 3.5);
    const std::vector<double> zero{0.0, 0.0};
    m.set_user("u", zero, 0.0);
    m.set_item("i", zero, 0.0);
    EXPECT_EQ(m.predict("u", "i"), 3.5);
    EXPECT_EQ(m.predict("other", "thing"), 3.5);
}

TEST(Predict, UnknownUserUsesKnownItemBias) {
    FactorModel m(1, 3.0);
    m.set_item("i", std::vector<double>{0.7}, 0.2);
    EXPECT_DOUBLE_EQ(m.predict("nobody", "i"), 3.2);
}

TEST(Predict, UnknownItemUsesKnownUserBias) {
    FactorModel m(1, 1.0);
    m.set_user("u", std::vector<double>{0.7}, -0.5);
    EXPECT_DOUBLE_EQ(m.predict("u", "nothing"), 0.5);
}

TEST(Predict, DotProduct) {
    FactorModel m(2, 0.0);
    m.set_user("u", std::vector<double>{1.0, 0.0}, 0.0);
    m.set_item("i", std::vector<double>{1.0, 0.0}, 0.0);
    EXPECT_EQ(m.predict("u", "i"), 1.0);
}

TEST(Predict, WrongFactorLengthRejected) {
    FactorModel m(3, 0.0);
    EXPECT_THROW(m.set_user("u", std::vector<double>{1.0}, 0.0), Error);
}

// ---------------------------------------------------------------------------
// mse and user_mse

TEST(Mse, PerfectPredictionsAreZero) {
    FactorModel m(1, 0.0);
    m.set_user("u", std::vector<double>{2.0}, 0.0);
    m.set_item("a", std::vector<double>{1.5}, 0.0);
    m.set_item("b", std::vector<double>{-1.0}, 0.0);
    const Triples eval{{"u", "a", 3.0}, {"u", "b", -2.0}};
    EXPECT_EQ(mse(m, eval), 0.0);
}

TEST(Mse, ConstantPredictionHandArithmetic) {
    const auto m = constant_model(1, 3.0);
    const Triples eval{{"u", "a", 1.0}, {"v", "b", 5.0}};
    EXPECT_DOUBLE_EQ(mse(m, eval), 4.0);
}

TEST(Mse, ThirdOfAUnit) {
    FactorModel m(1, 0.0);
    m.set_item("a", std::vector<double>{0.0}, 2.0);
    m.set_item("b", std::vector<double>{0.0}, 4.0);
    m.set_item("c", std::vector<double>{0.0}, 5.0);
    const Triples eval{{"u", "a", 2.0}, {"u", "b", 4.0}, {"u", "c", 6.0}};
    EXPECT_DOUBLE_EQ(mse(m, eval), 1.0 / 3.0);
}

TEST(Mse, EmptyEvaluationSetRejected) {
    EXPECT_THROW(mse(constant_model(1, 0.0), Triples{}), Error);
}

TEST(UserMse, ExactSingleTriple) {
    const auto m = constant_model(1, 2.0);
    const Triples eval{{"u", "a", 2.0}, {"v", "a", 9.0}};
    EXPECT_EQ(user_mse(m, eval, "u"), 0.0);
}

TEST(UserMse, SymmetricResiduals) {
    const auto m = constant_model(1, 2.0);
    const Triples eval{{"u", "a", 3.0}, {"u", "b", 1.0}};
    EXPECT_DOUBLE_EQ(user_mse(m, eval, "u"), 1.0);
}

TEST(UserMse, AbsentUserRejected) {
    EXPECT_THROW(user_mse(constant_model(1, 2.0), Triples{{"u", "a", 1.0}}, "v"), Error);
}

// Global MSE is the count-weighted mean of per-user MSEs.
TEST(MseProperty, DecomposesOverUsers) {
    Gen g(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rank = g.index(1, 4);
        FactorModel m(rank, g.uniform(1.0, 4.0));
        const std::size_t n_users = g.index(1, 8), n_items = g.index(1, 8);
        for (std::size_t u = 0; u < n_users; ++u) {
            std::vector<double> f(rank);
            for (auto& x : f) x = g.normal();
            m.set_user("u" + std::to_string(u), f, g.normal());
        }
        for (std::size_t i = 0; i < n_items; ++i) {
            std::vector<double> f(rank);
            for (auto& x : f) x = g.normal();
            m.set_item("i" + std::to_string(i), f, g.normal());
        }
        Triples eval;
        for (std::size_t u = 0; u < n_users + 2; ++u)  // two users unknown to the model
            for (std::size_t i = 0; i < n_items + 1; ++i)
                if (g.coin(0.6)) eval.push_back({"u" + std::to_string(u), "i" + std::to_string(i), g.uniform(0, 5)});
        if (eval.empty()) eval.push_back({"u0", "i0", 1.0});
        double weighted = 0.0;
        std::size_t total = 0;
        for (const auto& [user, sum] : per_user_errors(m, eval)) {
            weighted += static_cast<double>(sum.count) * user_mse(m, eval, user);
            total += sum.count;
        }
        const double global = mse(m, eval);
        EXPECT_EQ(total, eval.size());
        EXPECT_LE(std::abs(weighted / static_cast<double>(total) - global), 1e-12 * std::max(1.0, global));
    }
}

// ---------------------------------------------------------------------------
// SGD update and training

TEST(SgdUpdate, SimultaneousFromOldValues) {
    std::vector<double> p{1.0, 2.0}, q{0.5, -1.0};
    sgd_factor_update(p, q, 2.0, 0.1, 0.5);
    EXPECT_DOUBLE_EQ(p[0], 1.0 + 0.1 * (2.0 * 0.5 - 0.5 * 1.0));
    EXPECT_DOUBLE_EQ(p[1], 2.0 + 0.1 * (2.0 * -1.0 - 0.5 * 2.0));
    EXPECT_DOUBLE_EQ(q[0], 0.5 + 0.1 * (2.0 * 1.0 - 0.5 * 0.5));
    EXPECT_DOUBLE_EQ(q[1], -1.0 + 0.1 * (2.0 * 2.0 - 0.5 * -1.0));
}

// At a zero-residual point the data gradient vanishes: without
// regularization the update is a no-op, with it both factors shrink.
TEST(SgdUpdateProperty, RegularizationShrinksAtOptimum) {
    Gen g(8);
    auto norm = [](const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); };
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t r = g.index(1, 30);
        std::vector<double> p(r), q(r);
        for (auto& x : p) x = g.uniform(-1, 1);
        for (auto& x : q) x = g.uniform(-1, 1);
        const double lr = g.log_uniform(1e-4, 0.1), reg = g.log_uniform(1e-3, 1.0);
        auto p0 = p, q0 = q, p1 = p, q1 = q;
        sgd_factor_update(p0, q0, 0.0, lr, 0.0);
        sgd_factor_update(p1, q1, 0.0, lr, reg);
        EXPECT_EQ(p0, p);
        EXPECT_EQ(q0, q);
        EXPECT_LT(norm(p1), norm(p));
        EXPECT_LT(norm(q1), norm(q));
    }
}

TEST(Train, RankOneNoiselessMatchesSvdReconstruction) {
    SyntheticRatingsSpec spec;
    spec.n_users = 15, spec.n_items = 12, spec.rank = 1, spec.noise_sd = 0.0, spec.density = 1.0, spec.seed = 3;
    const auto ts = gen_synthetic_ratings(spec);

    Eigen::MatrixXd dense(spec.n_users, spec.n_items);
    for (std::size_t k = 0; k < ts.size(); ++k) dense(k / spec.n_items, k % spec.n_items) = ts[k].value;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd rank1 =
        svd.singularValues()(0) * svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
    ASSERT_LT((dense - rank1).cwiseAbs().maxCoeff(), 1e-10);

    TrainConfig cfg;
    cfg.rank = 1, cfg.learning_rate = 0.02, cfg.regularization = 0.0, cfg.epochs = 400, cfg.seed = 1;
    const auto m = train(ts, cfg);
    EXPECT_LE(mse(m, ts), 1e-3);
    double sse = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double e = m.predict(ts[k].user, ts[k].item) - rank1(k / spec.n_items, k % spec.n_items);
        sse += e * e;
    }
    EXPECT_LE(sse / static_cast<double>(ts.size()), 1e-3);
}

TEST(Train, SingleTriple) {
    for (std::size_t rank : {1u, 5u, 30u}) {
        TrainConfig cfg;
        cfg.rank = rank;
        const auto m = train(Triples{{"u1", "i1", 5.0}}, cfg);
        EXPECT_NEAR(m.predict("u1", "i1"), 5.0, 1e-2);
    }
}

TEST(Train, DeterministicForSameSeed) {
    SyntheticRatingsSpec spec;
    spec.n_users = 25, spec.n_items = 25, spec.rank = 3, spec.density = 0.4;
    const auto ts = gen_synthetic_ratings(spec);
    TrainConfig cfg;
    cfg.rank = 5, cfg.epochs = 10, cfg.seed = 4;
    const auto a = train(ts, cfg), b = train(ts, cfg);
    EXPECT_EQ(mse(a, ts), mse(b, ts));
    for (std::size_t u = 0; u < a.users().size(); ++u) {
        EXPECT_EQ(a.users()[u], b.users()[u]);
        for (std::size_t k = 0; k < cfg.rank; ++k) EXPECT_EQ(a.user_factors(u)[k], b.user_factors(u)[k]);
    }
    cfg.seed = 5;
    EXPECT_NE(mse(train(ts, cfg), ts), mse(a, ts));
}

TEST(Train, ConfigValidation) {
    const Triples ts{{"u", "i", 1.0}};
    TrainConfig cfg;
    cfg.rank = 0;
    EXPECT_THROW(train(ts, cfg), ConfigError);
    cfg = {};
    cfg.epochs = 0;
    EXPECT_THROW(train(ts, cfg), ConfigError);
    cfg = {};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(train(ts, cfg), ConfigError);
    cfg = {};
    cfg.regularization = -0.1;
    EXPECT_THROW(train(ts, cfg), ConfigError);
    EXPECT_THROW(train(Triples{}, TrainConfig{}), Error);
}

TEST(Train, DivergenceNamesEpoch) {
    Triples ts;
    for (int u = 0; u < 5; ++u)
        for (int i = 0; i < 5; ++i) ts.push_back({"u" + std::to_string(u), "i" + std::to_string(i), 1e6 * (u - i)});
    TrainConfig cfg;
    cfg.learning_rate = 1.0;
    try {
        train(ts, cfg);
        FAIL() << "expected divergence";
    } catch (const TrainingError& e) {
        EXPECT_GE(e.epoch(), 1u);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

// Validation MSE over nested training prefixes trends downward on the
// benchmark corpus.
TEST(TrainProperty, NestedPrefixesMostlyImprove) {
    const auto ts = gen_synthetic_ratings(benchmark_corpus());
    const auto split = make_splits(ts, 0);
    Triples acquired = split.initial;
    Triples pool = split.pool;
    Gen g(1);
    std::shuffle(pool.begin(), pool.end(), g.rng());
    acquired.insert(acquired.end(), pool.begin(), pool.end());
    const std::size_t q = pool.size() / 12;
    std::vector<double> errors;
    for (std::size_t size = split.initial.size() + q; size <= acquired.size(); size += q) {
        TrainConfig cfg;
        cfg.seed = mix_seed(0, size);
        errors.push_back(mse(train(std::span(acquired).first(size), cfg), split.validation));
    }
    std::size_t improving = 0;
    for (std::size_t k = 1; k < errors.size(); ++k) improving += errors[k] <= errors[k - 1];
    EXPECT_GE(static_cast<double>(improving), 0.8 * static_cast<double>(errors.size() - 1))
        << ::testing::PrintToString(errors);
}

}  // namespace
}  // namespace datamin
