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
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "datamin/dataset.hpp"
#include "support.hpp"

namespace datamin {
namespace {

using testing::Gen;

Triples parse(const std::string& text) {
    std::istringstream in(text);
    return parse_ratings(in);
}

Triples corpus(const std::vector<std::pair<std::string, std::size_t>>& users) {
    Triples out;
    for (const auto& [user, count] : users)
        for (std::size_t i = 0; i < count; ++i) out.push_back({user, "i" + std::to_string(i), 1.0 + i % 5});
    return out;
}

std::map<std::string, std::size_t> per_user(const Triples& ts) {
    std::map<std::string, std::size_t> out;
    for (const auto& t : ts) ++out[t.user];
    return out;
}

std::set<CellKey> keys(const Triples& ts) {
    std::set<CellKey> out;
    for (const auto& t : ts) out.insert(key_of(t));
    return out;
}

// ---------------------------------------------------------------------------
// Loading

TEST(LoadRatings, ParsesLinesInOrder) {
    const auto ts = parse("u1,i1,4.0\nu1,i2,3.0\n");
    ASSERT_EQ(ts.size(), 2u);
    EXPECT_EQ(ts[0], (RatingTriple{"u1", "i1", 4.0}));
    EXPECT_EQ(ts[1], (RatingTriple{"u1", "i2", 3.0}));
}

TEST(LoadRatings, HeaderOnlyIsEmpty) { EXPECT_TRUE(parse("user_id,item_id,rating\n").empty()); }

TEST(LoadRatings, HeaderAndBlankLinesSkipped) {
    const auto ts = parse("user,item,rating\r\n\nu1, i1 , 2.5\r\n\n");
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts[0], (RatingTriple{"u1", "i1", 2.5}));
}

TEST(LoadRatings, DuplicatePairRejected) { EXPECT_THROW(parse("u1,i1,4.0\nu1,i1,4.0\n"), ParseError); }

TEST(LoadRatings, MalformedLineReportsLineNumber) {
    try {
        parse("u1,i1,4.0\nu2,i2\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse("u1,i1,4.0\nu2,i2,abc\n"), ParseError);
    EXPECT_THROW(parse("u1,i1,nan\n"), ParseError);
    EXPECT_THROW(parse(",i1,1\n"), ParseError);
}

TEST(LoadRatings, MissingFile) {
    EXPECT_THROW(load_ratings("/nonexistent/ratings.csv"), Error);
}

TEST(LoadRatings, RoundTripsThroughFile) {
    testing::TempDir dir("load");
    testing::write_file(dir / "r.csv", "user_id,item_id,rating\na,x,1\nb,y,-2.25\n");
    const auto ts = load_ratings(dir / "r.csv");
    ASSERT_EQ(ts.size(), 2u);
    EXPECT_EQ(ts[1].value, -2.25);
}

TEST(FilterMinRatings, KeepsUsersAtOrAboveCount) {
    const auto ts = corpus({{"a", 3}, {"b", 5}, {"c", 4}});
    const auto kept = filter_min_ratings(ts, 4);
    EXPECT_EQ(per_user(kept), (std::map<std::string, std::size_t>{{"b", 5}, {"c", 4}}));
}

// ---------------------------------------------------------------------------
// Splits

TEST(MakeSplits, SingleUserHundredRatings) {
    const auto s = make_splits(corpus({{"u", 100}}), 7);
    EXPECT_EQ(s.initial.size(), 10u);
    EXPECT_EQ(s.validation.size(), 10u);
    EXPECT_EQ(s.test.size(), 10u);
    EXPECT_EQ(s.pool.size(), 70u);
    EXPECT_EQ(s.seed, 7u);
}

TEST(MakeSplits, TwoUsersTwentyEach) {
    const auto s = make_splits(corpus({{"a", 20}, {"b", 20}}), 3);
    for (const auto* set : {&s.initial, &s.validation, &s.test})
        EXPECT_EQ(per_user(*set), (std::map<std::string, std::size_t>{{"a", 2}, {"b", 2}}));
    EXPECT_EQ(per_user(s.pool), (std::map<std::string, std::size_t>{{"a", 14}, {"b", 14}}));
}

TEST(MakeSplits, SeedsChangeMembershipNotCounts) {
    const auto ts = corpus({{"a", 37}, {"b", 52}, {"c", 10}});
    const auto s1 = make_splits(ts, 1), s2 = make_splits(ts, 2);
    EXPECT_NE(keys(s1.pool), keys(s2.pool));
    EXPECT_EQ(per_user(s1.initial), per_user(s2.initial));
    EXPECT_EQ(per_user(s1.validation), per_user(s2.validation));
    EXPECT_EQ(per_user(s1.test), per_user(s2.test));
    EXPECT_EQ(per_user(s1.pool), per_user(s2.pool));
}

TEST(MakeSplits, RejectsUserBelowMinimumByName) {
    try {
        make_splits(corpus({{"plenty", 30}, {"sparse_user", 9}}), 0);
        FAIL() << "expected a split error";
    } catch (const SplitError& e) {
        EXPECT_NE(std::string(e.what()).find("sparse_user"), std::string::npos);
    }
}

TEST(MakeSplits, Deterministic) {
    const auto ts = corpus({{"a", 40}, {"b", 13}});
    const auto s1 = make_splits(ts, 11), s2 = make_splits(ts, 11);
    EXPECT_EQ(s1.initial, s2.initial);
    EXPECT_EQ(s1.validation, s2.validation);
    EXPECT_EQ(s1.test, s2.test);
    EXPECT_EQ(s1.pool, s2.pool);
}

// Partition and stratification over random user count profiles.
TEST(MakeSplitsProperty, PartitionAndStratification) {
    Gen g(2024);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::pair<std::string, std::size_t>> users;
        const std::size_t n_users = g.index(1, 12);
        for (std::size_t u = 0; u < n_users; ++u) users.push_back({"user" + std::to_string(u), g.index(10, 120)});
        auto ts = corpus(users);
        std::shuffle(ts.begin(), ts.end(), g.rng());
        const auto s = make_splits(ts, g.index(0, 1u << 30));

        const auto all = keys(ts);
        std::set<CellKey> seen;
        std::size_t total = 0;
        for (const auto* set : {&s.initial, &s.validation, &s.test, &s.pool}) {
            for (const auto& t : *set) EXPECT_TRUE(seen.insert(key_of(t)).second) << "overlap";
            total += set->size();
        }
        EXPECT_EQ(total, ts.size());
        EXPECT_EQ(seen, all);

        const auto counts = per_user(ts);
        const auto ini = per_user(s.initial), val = per_user(s.validation), tst = per_user(s.test),
                   pool = per_user(s.pool);
        for (const auto& [user, count] : counts) {
            EXPECT_EQ(ini.at(user), count / 10);
            EXPECT_EQ(val.at(user), count / 10);
            EXPECT_EQ(tst.at(user), count / 10);
            EXPECT_EQ(pool.at(user), count - 3 * (count / 10));
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic ratings

TEST(SyntheticRatings, TinyExactlyRankOne) {
    SyntheticRatingsSpec spec;
    spec.n_users = 2, spec.n_items = 2, spec.rank = 1, spec.noise_sd = 0.0, spec.density = 1.0, spec.seed = 5;
    const auto ts = gen_synthetic_ratings(spec);
    ASSERT_EQ(ts.size(), 4u);
    // row-major order: (u0,i0) (u0,i1) (u1,i0) (u1,i1)
    EXPECT_NEAR(ts[0].value * ts[3].value, ts[1].value * ts[2].value, 1e-12);
}

TEST(SyntheticRatings, DensityCount) {
    SyntheticRatingsSpec spec;
    spec.n_users = 10, spec.n_items = 10, spec.rank = 2, spec.density = 0.5;
    EXPECT_EQ(gen_synthetic_ratings(spec).size(), 50u);
    spec.density = 0.07;
    EXPECT_EQ(gen_synthetic_ratings(spec).size(), 7u);
}

TEST(SyntheticRatings, DeterministicAndUnique) {
    SyntheticRatingsSpec spec;
    spec.n_users = 30, spec.n_items = 20, spec.bias_sd = 0.5, spec.seed = 9;
    const auto a = gen_synthetic_ratings(spec), b = gen_synthetic_ratings(spec);
    EXPECT_EQ(a, b);
    EXPECT_EQ(keys(a).size(), a.size());
    spec.seed = 10;
    EXPECT_NE(a, gen_synthetic_ratings(spec));
}

TEST(SyntheticRatings, InvalidParameters) {
    SyntheticRatingsSpec spec;
    spec.n_users = 3, spec.n_items = 4;
    spec.rank = 4;
    EXPECT_THROW(gen_synthetic_ratings(spec), Error);
    spec.rank = 0;
    EXPECT_THROW(gen_synthetic_ratings(spec), Error);
    spec.rank = 2;
    spec.density = 0.0;
    EXPECT_THROW(gen_synthetic_ratings(spec), Error);
    spec.density = 1.5;
    EXPECT_THROW(gen_synthetic_ratings(spec), Error);
    spec.density = 1.0;
    spec.bias_sd = -1.0;
    EXPECT_THROW(gen_synthetic_ratings(spec), Error);
}

// Noiseless, bias-free corpora are exactly offset + scale * (rank-r matrix):
// every (r+1) x (r+1) minor of a dense draw vanishes.
TEST(SyntheticRatings, RankOneMinorsVanish) {
    SyntheticRatingsSpec spec;
    spec.n_users = 6, spec.n_items = 5, spec.rank = 1, spec.noise_sd = 0.0, spec.density = 1.0;
    const auto ts = gen_synthetic_ratings(spec);
    auto at = [&](std::size_t u, std::size_t i) { return ts[u * spec.n_items + i].value; };
    for (std::size_t u = 0; u + 1 < spec.n_users; ++u)
        for (std::size_t i = 0; i + 1 < spec.n_items; ++i)
            EXPECT_NEAR(at(u, i) * at(u + 1, i + 1) - at(u, i + 1) * at(u + 1, i), 0.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Synthetic performance points

TEST(PerformancePoints, SinglePieceInverse) {
    const SyntheticCurveSpec spec{{{1.0, 1.0}}, {}, 0.0, {1, 2, 4}};
    const auto pts = gen_performance_points(spec, 0);
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_EQ(pts[0], (PerformancePoint{1, 1.0}));
    EXPECT_EQ(pts[1], (PerformancePoint{2, 0.5}));
    EXPECT_EQ(pts[2], (PerformancePoint{4, 0.25}));
}

TEST(PerformancePoints, FlatPiece) {
    const SyntheticCurveSpec spec{{{2.5, 0.0}}, {}, 0.0, {3, 30, 300}};
    for (const auto& p : gen_performance_points(spec, 4)) EXPECT_EQ(p.value, 2.5);
}

TEST(PerformancePoints, ChangepointBoundary) {
    const SyntheticCurveSpec spec{{{1.0, 0.5}, {3.0, 0.2}}, {100.0}, 0.0, {100, 101}};
    const auto pts = gen_performance_points(spec, 0);
    EXPECT_DOUBLE_EQ(pts[0].value, std::pow(100.0, -0.5));
    EXPECT_DOUBLE_EQ(pts[1].value, 3.0 * std::pow(101.0, -0.2));
}

TEST(PerformancePoints, NoiselessReproducesCurveProperty) {
    Gen g(77);
    for (int trial = 0; trial < 30; ++trial) {
        const auto fx = testing::random_piecewise(g, g.index(1, 3), g.index(10, 40));
        const SyntheticCurveSpec spec{fx.curve.pieces, fx.curve.changepoints, 0.0, fx.sizes};
        const auto pts = gen_performance_points(spec, trial);
        for (const auto& p : pts) {
            const double x = static_cast<double>(p.size);
            std::size_t k = 0;
            while (k < fx.curve.changepoints.size() && x > fx.curve.changepoints[k]) ++k;
            const double want = fx.curve.pieces[k].a * std::pow(x, -fx.curve.pieces[k].b);
            EXPECT_LE(std::abs(p.value - want), 1e-12 * std::abs(want));
        }
    }
}

TEST(PerformancePoints, NoiseIsSeededAndCentered) {
    std::vector<std::size_t> sizes(4000);
    std::iota(sizes.begin(), sizes.end(), std::size_t{1});
    const SyntheticCurveSpec spec{{{1.0, 0.0}}, {}, 0.1, sizes};
    const auto a = gen_performance_points(spec, 3), b = gen_performance_points(spec, 3),
               c = gen_performance_points(spec, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    double mean = 0, var = 0;
    for (const auto& p : a) mean += p.value - 1.0;
    mean /= static_cast<double>(a.size());
    for (const auto& p : a) var += (p.value - 1.0 - mean) * (p.value - 1.0 - mean);
    var /= static_cast<double>(a.size() - 1);
    EXPECT_NEAR(mean, 0.0, 5 * 0.1 / std::sqrt(4000.0));
    EXPECT_NEAR(std::sqrt(var), 0.1, 0.01);
}

TEST(PerformancePoints, InvalidSpecs) {
    EXPECT_THROW(gen_performance_points({{{1.0, 1.0}}, {5.0}, 0.0, {1}}, 0), Error);
    EXPECT_THROW(gen_performance_points({{{-1.0, 1.0}}, {}, 0.0, {1}}, 0), Error);
    EXPECT_THROW(gen_performance_points({{{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}, {5.0, 5.0}, 0.0, {1}}, 0), Error);
    EXPECT_THROW(gen_performance_points({{{1.0, 1.0}}, {}, 0.0, {0}}, 0), Error);
}

}  // namespace
}  // namespace datamin
