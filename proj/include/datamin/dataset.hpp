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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "datamin/curves.hpp"
#include "datamin/error.hpp"
#include "datamin/random.hpp"

namespace datamin {

struct RatingTriple {
    std::string user;
    std::string item;
    double value = 0.0;

    friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

using Triples = std::vector<RatingTriple>;

/// (user, item) key of one observation.
struct CellKey {
    std::string user;
    std::string item;

    friend bool operator==(const CellKey&, const CellKey&) = default;
    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        std::size_t h = std::hash<std::string>{}(k.user);
        return h ^ (std::hash<std::string>{}(k.item) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    }
};

inline CellKey key_of(const RatingTriple& t) { return {t.user, t.item}; }

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

}  // namespace detail

/// Parses user_id,item_id,rating lines. A first line whose rating field is not
/// numeric is taken as a header. Blank lines are skipped.
inline Triples parse_ratings(std::istream& in) {
    Triples out;
    std::unordered_set<CellKey, CellKeyHash> seen;
    std::string line;
    std::size_t lineno = 0;
    bool first_data_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        auto body = detail::trim(line);
        if (body.empty()) continue;
        auto fields = detail::split_commas(body);
        if (fields.size() != 3) throw ParseError("expected 3 comma-separated fields", lineno);
        double value = 0.0;
        if (!detail::parse_double(fields[2], value)) {
            if (first_data_line) {
                first_data_line = false;
                continue;
            }
            throw ParseError("non-numeric rating '" + std::string(fields[2]) + "'", lineno);
        }
        first_data_line = false;
        if (!std::isfinite(value)) throw ParseError("rating is not finite", lineno);
        if (fields[0].empty() || fields[1].empty()) throw ParseError("empty user or item id", lineno);
        RatingTriple t{std::string(fields[0]), std::string(fields[1]), value};
        if (!seen.insert(key_of(t)).second)
            throw ParseError("duplicate (user, item) pair (" + t.user + ", " + t.item + ")", lineno);
        out.push_back(std::move(t));
    }
    return out;
}

inline Triples load_ratings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open ratings file " + path.string());
    return parse_ratings(in);
}

/// Keeps the triples of users with at least min_count ratings, in input order.
inline Triples filter_min_ratings(std::span<const RatingTriple> triples, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : triples) ++counts[t.user];
    Triples out;
    for (const auto& t : triples)
        if (counts[t.user] >= min_count) out.push_back(t);
    return out;
}

/// Initial / validation / test / pool partition, stratified per user.
struct DatasetSplit {
    Triples initial;
    Triples validation;
    Triples test;
    Triples pool;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinRatingsPerUser = 10;

/// Per user, floor(10%) of that user's ratings go to each of initial, validation
/// and test; the remainder goes to the pool. Membership is a seeded uniform
/// shuffle within each user; every output set keeps input order.
inline DatasetSplit make_splits(std::span<const RatingTriple> triples, std::uint64_t seed) {
    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        auto [it, inserted] = by_user.try_emplace(triples[i].user);
        if (inserted) user_order.push_back(triples[i].user);
        it->second.push_back(i);
    }

    // 0 = initial, 1 = validation, 2 = test, 3 = pool
    std::vector<int> membership(triples.size(), 3);
    Rng rng(seed);
    for (const auto& user : user_order) {
        auto& idx = by_user[user];
        if (idx.size() < kMinRatingsPerUser)
            throw SplitError("user '" + user + "' has " + std::to_string(idx.size()) +
                             " ratings; at least " + std::to_string(kMinRatingsPerUser) + " required");
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t stratum = idx.size() / 10;
        for (std::size_t j = 0; j < 3 * stratum; ++j) membership[idx[j]] = static_cast<int>(j / stratum);
    }

    DatasetSplit split;
    split.seed = seed;
    Triples* sets[4] = {&split.initial, &split.validation, &split.test, &split.pool};
    for (std::size_t i = 0; i < triples.size(); ++i) sets[membership[i]]->push_back(triples[i]);
    return split;
}

struct SyntheticRatingsSpec {
    std::size_t n_users = 200;
    std::size_t n_items = 200;
    std::size_t rank = 5;
    double noise_sd = 0.1;
    std::uint64_t seed = 0;
    double density = 0.3;
    double scale = 1.0;    // multiplies the signal (biases and low-rank term)
    double offset = 0.0;   // added to every value
    double bias_sd = 0.0;  // user and item bias spread
};

/// Values are offset + scale * (b_u + c_i + (U V^T)_{ui} / sqrt(rank)) +
/// N(0, noise_sd^2) with standard-normal U and V and N(0, bias_sd^2) biases,
/// observed on floor(density * users * items) uniformly chosen cells.
/// Output is in (user, item) row-major order.
inline Triples gen_synthetic_ratings(const SyntheticRatingsSpec& spec) {
    if (spec.n_users == 0 || spec.n_items == 0) throw Error("synthetic corpus needs users and items");
    if (spec.rank == 0 || spec.rank > std::min(spec.n_users, spec.n_items))
        throw Error("rank must be in [1, min(n_users, n_items)]");
    if (!(spec.density > 0.0 && spec.density <= 1.0)) throw Error("density must be in (0, 1]");
    if (!(spec.noise_sd >= 0.0)) throw Error("noise_sd must be nonnegative");
    if (!(spec.bias_sd >= 0.0)) throw Error("bias_sd must be nonnegative");

    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> u(spec.n_users * spec.rank), v(spec.n_items * spec.rank);
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    std::vector<double> bu(spec.n_users, 0.0), bi(spec.n_items, 0.0);
    if (spec.bias_sd > 0.0) {
        for (auto& x : bu) x = spec.bias_sd * normal(rng);
        for (auto& x : bi) x = spec.bias_sd * normal(rng);
    }

    const std::size_t total = spec.n_users * spec.n_items;
    const auto count = static_cast<std::size_t>(
        std::floor(spec.density * static_cast<double>(total) + 1e-9));
    std::vector<std::size_t> cells(total);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(cells[i], cells[pick(rng)]);
    }
    cells.resize(count);
    std::sort(cells.begin(), cells.end());

    const double norm = 1.0 / std::sqrt(static_cast<double>(spec.rank));
    std::normal_distribution<double> noise(0.0, spec.noise_sd > 0.0 ? spec.noise_sd : 1.0);
    Triples out;
    out.reserve(count);
    for (auto cell : cells) {
        const std::size_t ui = cell / spec.n_items, ii = cell % spec.n_items;
        double dot = 0.0;
        for (std::size_t k = 0; k < spec.rank; ++k) dot += u[ui * spec.rank + k] * v[ii * spec.rank + k];
        double value = spec.offset + spec.scale * (bu[ui] + bi[ii] + norm * dot);
        if (spec.noise_sd > 0.0) value += noise(rng);
        out.push_back({"u" + std::to_string(ui), "i" + std::to_string(ii), value});
    }
    return out;
}

/// Ground-truth piecewise power law sampled at fixed sizes.
struct SyntheticCurveSpec {
    std::vector<PowerLawPiece> pieces;
    std::vector<double> changepoints;
    double noise_sd = 0.0;
    std::vector<std::size_t> sizes;

    PiecewisePowerLaw curve() const { return {pieces, changepoints}; }
};

inline std::vector<PerformancePoint> gen_performance_points(const SyntheticCurveSpec& spec,
                                                            std::uint64_t seed) {
    if (spec.pieces.size() != spec.changepoints.size() + 1)
        throw Error("need exactly one more piece than changepoints");
    for (const auto& p : spec.pieces)
        if (!(p.a > 0.0)) throw Error("piece coefficient a must be positive");
    for (std::size_t i = 1; i < spec.changepoints.size(); ++i)
        if (!(spec.changepoints[i - 1] < spec.changepoints[i]))
            throw Error("changepoints must be strictly increasing");
    if (!(spec.noise_sd >= 0.0)) throw Error("noise_sd must be nonnegative");

    const auto curve = spec.curve();
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sd > 0.0 ? spec.noise_sd : 1.0);
    std::vector<PerformancePoint> out;
    out.reserve(spec.sizes.size());
    for (auto size : spec.sizes) {
        if (size == 0) throw Error("sample sizes must be positive");
        double y = eval_curve(curve, static_cast<double>(size));
        if (spec.noise_sd > 0.0) y += noise(rng);
        out.push_back({size, y});
    }
    return out;
}

}  // namespace datamin
