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
#pragma once

// Feature acquisition policies: which pool observations to query next.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "datamin/dataset.hpp"
#include "datamin/error.hpp"
#include "datamin/impute.hpp"
#include "datamin/random.hpp"

namespace datamin {

struct QueryBatch {
    std::vector<CellKey> pairs;
    std::vector<double> scores;  // empty for random acquisition
};

inline QueryBatch random_policy(std::span<const CellKey> pool, std::size_t q, std::uint64_t seed) {
    if (pool.empty()) throw Error("acquisition from an empty pool");
    if (q < 1) throw Error("query size must be >= 1");
    std::vector<std::size_t> perm(pool.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const std::size_t take = std::min(q, pool.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, perm.size() - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    QueryBatch out;
    for (std::size_t i = 0; i < take; ++i) out.pairs.push_back(pool[perm[i]]);
    return out;
}

/// The q highest-scoring keys, highest first. Equal scores keep the order of
/// a seeded shuffle, so all-equal scores reduce to random acquisition.
inline QueryBatch select_top(std::span<const CellKey> pool, std::span<const double> scores, std::size_t q,
                             std::uint64_t seed) {
    if (pool.empty()) throw Error("acquisition from an empty pool");
    if (q < 1) throw Error("query size must be >= 1");
    std::vector<std::size_t> perm(pool.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    QueryBatch out;
    const std::size_t take = std::min(q, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        out.pairs.push_back(pool[perm[i]]);
        out.scores.push_back(scores[perm[i]]);
    }
    return out;
}

/// Population variance of several completions at each pool cell.
inline std::vector<double> completion_variance(const ObservedMatrix& m, std::span<const CellKey> pool,
                                               std::span<const Eigen::MatrixXd> completions) {
    std::vector<double> out;
    out.reserve(pool.size());
    for (const auto& key : pool) {
        const auto u = static_cast<Eigen::Index>(m.user_index(key.user));
        const auto i = static_cast<Eigen::Index>(m.item_index(key.item));
        if (!std::isnan(m.dense()(u, i))) throw Error("pool key (" + key.user + ", " + key.item + ") is already observed");
        double mean = 0.0;
        for (const auto& c : completions) mean += c(u, i);
        mean /= static_cast<double>(completions.size());
        double var = 0.0;
        for (const auto& c : completions) var += (c(u, i) - mean) * (c(u, i) - mean);
        out.push_back(var / static_cast<double>(completions.size()));
    }
    return out;
}

/// Uncertainty = variance of svd_impute predictions across ranks.
inline QueryBatch stability_policy(const ObservedMatrix& m, std::span<const CellKey> pool, std::size_t q,
                                   std::span<const std::size_t> ranks, std::uint64_t seed,
                                   ImputeOptions opts = {}) {
    if (pool.empty()) throw Error("acquisition from an empty pool");
    if (ranks.empty()) throw Error("stability needs at least one rank");
    std::vector<Eigen::MatrixXd> completions;
    for (auto r : ranks) completions.push_back(svd_impute(m, r, opts));
    const auto scores = completion_variance(m, pool, completions);
    return select_top(pool, scores, q, seed);
}

struct QbcOptions {
    std::size_t svd_rank = 5;  // capped at min(users, items)
    std::size_t k = 5;
    ImputeOptions impute;
};

/// Committee of svd, knn and em imputers; uncertainty = their variance.
inline QueryBatch qbc_policy(const ObservedMatrix& m, std::span<const CellKey> pool, std::size_t q,
                             std::uint64_t seed, QbcOptions opts = {}) {
    if (pool.empty()) throw Error("acquisition from an empty pool");
    const auto cap = static_cast<std::size_t>(std::min(m.dense().rows(), m.dense().cols()));
    const std::vector<Eigen::MatrixXd> committee{svd_impute(m, std::min(opts.svd_rank, cap), opts.impute),
                                                 knn_impute(m, opts.k), em_impute(m, opts.impute)};
    const auto scores = completion_variance(m, pool, committee);
    return select_top(pool, scores, q, seed);
}

enum class PolicyKind { Random, Stability, Qbc };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::Random: return "random";
        case PolicyKind::Stability: return "stability";
        case PolicyKind::Qbc: return "qbc";
    }
    return "?";
}

inline std::optional<PolicyKind> parse_policy(std::string_view s) {
    for (auto k : {PolicyKind::Random, PolicyKind::Stability, PolicyKind::Qbc})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct PolicyConfig {
    PolicyKind kind = PolicyKind::Random;
    std::vector<std::size_t> ranks{1, 2, 3, 4, 5};
    QbcOptions qbc;
    ImputeOptions impute;
};

inline QueryBatch acquire(const PolicyConfig& cfg, const ObservedMatrix& m, std::span<const CellKey> pool,
                          std::size_t q, std::uint64_t seed) {
    switch (cfg.kind) {
        case PolicyKind::Random: return random_policy(pool, q, seed);
        case PolicyKind::Stability: return stability_policy(m, pool, q, cfg.ranks, seed, cfg.impute);
        case PolicyKind::Qbc: {
            auto opts = cfg.qbc;
            opts.impute = cfg.impute;
            return qbc_policy(m, pool, q, seed, opts);
        }
    }
    throw Error("unknown policy");
}

/// Gini coefficient of per-user acquisition counts.
inline double gini(std::span<const double> counts) {
    if (counts.empty()) throw Error("gini of an empty population");
    std::vector<double> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0.0) throw Error("counts must be nonnegative");
    double total = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        total += sorted[i];
        weighted += static_cast<double>(i + 1) * sorted[i];
    }
    if (total == 0.0) throw Error("gini undefined when every count is zero");
    const auto n = static_cast<double>(sorted.size());
    return std::clamp(2.0 * weighted / (n * total) - (n + 1.0) / n, 0.0, 1.0);
}

inline double acquisition_burden(const std::map<std::string, std::size_t>& counts) {
    std::vector<double> v;
    v.reserve(counts.size());
    for (const auto& [user, c] : counts) v.push_back(static_cast<double>(c));
    return gini(v);
}

}  // namespace datamin
