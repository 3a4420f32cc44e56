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

// The collection loop: acquire a batch, retrain on nested prefixes of the
// acquired data, refit the performance curve and test the stopping rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "datamin/acquisition.hpp"
#include "datamin/curves.hpp"
#include "datamin/dataset.hpp"
#include "datamin/error.hpp"
#include "datamin/fit.hpp"
#include "datamin/parallel.hpp"
#include "datamin/random.hpp"
#include "datamin/recommender.hpp"

namespace datamin {

// ---------------------------------------------------------------------------
// Stopping rules

enum class RuleKind { Returns, Relative };

inline std::string_view to_string(RuleKind k) { return k == RuleKind::Returns ? "returns" : "relative"; }

inline std::optional<RuleKind> parse_rule_kind(std::string_view s) {
    if (s == "returns") return RuleKind::Returns;
    if (s == "relative") return RuleKind::Relative;
    return std::nullopt;
}

/// Returns rule: threshold t < 0 on the curve slope; t = -inf never stops.
/// Relative rule: threshold g in (0, 1] on the predicted gain fraction.
struct StoppingRule {
    RuleKind kind = RuleKind::Returns;
    double threshold = -2e-7;
    // Stop when slope <= t instead of when slope >= t.
    bool literal_comparison = false;

    static StoppingRule returns(double t) { return {RuleKind::Returns, t, false}; }
    static StoppingRule relative(double g) { return {RuleKind::Relative, g, false}; }
    static StoppingRule never() { return returns(-std::numeric_limits<double>::infinity()); }

    bool never_stops() const { return kind == RuleKind::Returns && std::isinf(threshold); }

    void validate() const {
        if (kind == RuleKind::Returns && !(threshold < 0.0))
            throw ConfigError("returns threshold must be negative");
        if (kind == RuleKind::Relative && !(threshold > 0.0 && threshold <= 1.0))
            throw ConfigError("relative threshold must lie in (0, 1]");
    }
};

enum class Decision { Continue, Stop };

/// Stop once the estimated return has shrunk to the threshold: s >= t, i.e.
/// |s| <= |t| for a decreasing curve.
inline Decision evaluate_returns_rule(double slope_estimate, double t, bool literal = false) {
    if (std::isinf(t) && t < 0.0) return Decision::Continue;
    const bool stop = literal ? slope_estimate <= t : slope_estimate >= t;
    return stop ? Decision::Stop : Decision::Continue;
}

inline Decision evaluate_returns_rule(const Curve& curve, double current_size, double t, bool literal = false) {
    return evaluate_returns_rule(slope(curve, current_size), t, literal);
}

struct RelativeEvaluation {
    Decision decision = Decision::Continue;
    double fraction = 0.0;
    bool applicable = true;
};

/// Predicted share of the total achievable improvement already realized:
/// [f(initial) - f(current)] / [f(initial) - f(pool_total)], stop when >= g.
/// When the curve predicts no total gain the rule does not apply and
/// collection continues.
inline RelativeEvaluation evaluate_relative_rule(const Curve& curve, double current_size, double initial_size,
                                                 double pool_total_size, double g) {
    if (!(g > 0.0 && g <= 1.0)) throw ConfigError("relative threshold must lie in (0, 1]");
    if (!(initial_size <= current_size && current_size <= pool_total_size))
        throw Error("relative rule needs initial <= current <= pool total");
    const double start = eval_curve(curve, initial_size);
    const double total_gain = start - eval_curve(curve, pool_total_size);
    if (!(total_gain > 0.0)) return {Decision::Continue, 0.0, false};
    const double fraction = (start - eval_curve(curve, current_size)) / total_gain;
    return {fraction >= g ? Decision::Stop : Decision::Continue, fraction, true};
}

// ---------------------------------------------------------------------------
// Curve-free slope estimates

inline double naive_slope(std::span<const PerformancePoint> points) {
    if (points.size() < 2) throw Error("naive slope needs at least 2 points");
    const auto& a = points[points.size() - 2];
    const auto& b = points.back();
    return (b.value - a.value) / (static_cast<double>(b.size) - static_cast<double>(a.size));
}

/// (y[i+2] - y[i-2]) / (4q) on the complete point set.
inline double oracle_slope(std::span<const PerformancePoint> points, std::size_t i, std::size_t q) {
    if (i < 2 || i + 2 >= points.size())
        throw Error("oracle slope index " + std::to_string(i) + " outside [2, " +
                    std::to_string(points.size() < 3 ? 0 : points.size() - 3) + "]");
    return (points[i + 2].value - points[i - 2].value) / (4.0 * static_cast<double>(q));
}

// ---------------------------------------------------------------------------
// Methods

enum class Method { PowerLaw2PInitial, PowerLaw2P, PowerLaw3P, PowerLawExp3P, Piecewise2, Piecewise3, Naive, Oracle };

inline constexpr Method kAllMethods[] = {Method::PowerLaw2PInitial, Method::PowerLaw2P, Method::PowerLaw3P,
                                         Method::PowerLawExp3P,     Method::Piecewise2, Method::Piecewise3,
                                         Method::Naive,             Method::Oracle};

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::PowerLaw2PInitial: return "2p-pl-initial";
        case Method::PowerLaw2P: return "2p-pl";
        case Method::PowerLaw3P: return "3p-pl";
        case Method::PowerLawExp3P: return "3p-pl-exp";
        case Method::Piecewise2: return "piecewise2";
        case Method::Piecewise3: return "piecewise3";
        case Method::Naive: return "naive";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (auto m : kAllMethods)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

inline std::optional<CurveFamily> curve_family(Method m) {
    switch (m) {
        case Method::PowerLaw2PInitial:
        case Method::PowerLaw2P: return CurveFamily::PowerLaw2P;
        case Method::PowerLaw3P: return CurveFamily::PowerLaw3P;
        case Method::PowerLawExp3P: return CurveFamily::PowerLawExp3P;
        case Method::Piecewise2: return CurveFamily::Piecewise2;
        case Method::Piecewise3: return CurveFamily::Piecewise3;
        default: return std::nullopt;
    }
}

struct RunOptions {
    std::size_t min_points = 3;     // per piece
    std::size_t warmup_points = 0;  // 0: 3 * min_points
    std::size_t jobs = 1;           // concurrent subsample trainings
    bool per_user = false;          // keep per-user validation errors

    std::size_t warmup() const { return warmup_points > 0 ? warmup_points : 3 * min_points; }
};

// ---------------------------------------------------------------------------
// Performance points

struct SubsampleResult {
    PerformancePoint point;
    std::map<std::string, ErrorSum> user_errors;
};

/// Trains on the first `size` triples (seed mixed with the size) and measures
/// validation MSE.
inline SubsampleResult evaluate_prefix(std::span<const RatingTriple> acquired, std::size_t size,
                                       std::span<const RatingTriple> validation, TrainConfig cfg,
                                       bool per_user = false) {
    cfg.seed = mix_seed(cfg.seed, size);
    const auto model = train(acquired.first(size), cfg);
    SubsampleResult r{{size, mse(model, validation)}, {}};
    if (per_user) r.user_errors = per_user_errors(model, validation);
    return r;
}

/// Validation MSE at prefix sizes q, 2q, ..., floor(|A| / q) q.
inline std::vector<PerformancePoint> build_performance_points(std::span<const RatingTriple> acquired, std::size_t q,
                                                              std::span<const RatingTriple> validation,
                                                              const TrainConfig& cfg, std::size_t jobs = 1) {
    if (q < 1) throw Error("query size must be >= 1");
    if (acquired.size() < q) throw Error("need at least q acquired triples");
    if (validation.empty()) throw Error("validation set is empty");
    std::vector<PerformancePoint> out(acquired.size() / q);
    parallel_for(out.size(), jobs,
                 [&](std::size_t k) { out[k] = evaluate_prefix(acquired, (k + 1) * q, validation, cfg).point; });
    return out;
}

// ---------------------------------------------------------------------------
// Collection

/// Acquisition state of one run. Acquired data A starts as a seeded shuffle
/// of the initial set and grows by appending policy batches, so every
/// performance point, once computed, stays valid for all later batches.
class Collector {
public:
    Collector(const DatasetSplit& split, PolicyConfig policy, std::size_t q, TrainConfig train_cfg,
              std::uint64_t seed, RunOptions opts = {})
        : split_(&split), policy_(std::move(policy)), q_(q), train_(train_cfg), seed_(seed), opts_(opts) {
        if (q_ < 1) throw ConfigError("query size must be >= 1");
        if (split.validation.empty()) throw Error("validation set is empty");
        train_.validate();

        acquired_ = split.initial;
        Rng rng(mix_seed(seed_, 0x1417));
        std::shuffle(acquired_.begin(), acquired_.end(), rng);

        alive_.assign(split.pool.size(), true);
        remaining_ = split.pool.size();

        std::set<std::string> seen_users, seen_items;
        for (const auto* set : {&split.initial, &split.validation, &split.test, &split.pool})
            for (const auto& t : *set) {
                if (seen_users.insert(t.user).second) users_.push_back(t.user);
                if (seen_items.insert(t.item).second) items_.push_back(t.item);
            }
        if (policy_.kind != PolicyKind::Random)
            matrix_.emplace(ObservedMatrix::from_triples(users_, items_, split.initial));
    }

    bool exhausted() const noexcept { return remaining_ == 0; }
    std::size_t batch_count() const noexcept { return cumulative_.size(); }
    std::size_t initial_size() const noexcept { return split_->initial.size(); }
    std::size_t pool_size() const noexcept { return split_->pool.size(); }
    std::size_t q() const noexcept { return q_; }
    const std::vector<RatingTriple>& acquired() const noexcept { return acquired_; }
    const std::vector<std::size_t>& cumulative_sizes() const noexcept { return cumulative_; }
    const std::vector<PerformancePoint>& points() const noexcept { return points_; }
    const std::vector<std::map<std::string, ErrorSum>>& user_errors() const noexcept { return user_errors_; }
    const std::vector<std::string>& users() const noexcept { return users_; }

    /// Acquires min(q, remaining) pool observations and extends the points.
    void step() {
        if (exhausted()) throw Error("pool exhausted");
        std::vector<CellKey> keys;
        std::vector<std::size_t> index;
        keys.reserve(remaining_);
        for (std::size_t i = 0; i < alive_.size(); ++i)
            if (alive_[i]) {
                keys.push_back(key_of(split_->pool[i]));
                index.push_back(i);
            }
        const auto batch = acquire(policy_, matrix_ ? *matrix_ : empty_matrix(), keys, std::min(q_, remaining_),
                                   mix_seed(seed_, 0x5eed0000ULL + cumulative_.size()));
        std::unordered_map<CellKey, std::size_t, CellKeyHash> where;
        for (std::size_t i = 0; i < keys.size(); ++i) where.emplace(keys[i], index[i]);
        for (const auto& key : batch.pairs) {
            const std::size_t i = where.at(key);
            if (!alive_[i]) throw Error("policy returned a duplicate key");
            alive_[i] = false;
            --remaining_;
            acquired_.push_back(split_->pool[i]);
            if (matrix_) matrix_->set(key.user, key.item, split_->pool[i].value);
        }
        cumulative_.push_back(acquired_.size());
        extend_points();
    }

private:
    static const ObservedMatrix& empty_matrix() {
        static const ObservedMatrix m({}, {});
        return m;
    }

    void extend_points() {
        const std::size_t have = points_.size(), want = acquired_.size() / q_;
        if (want <= have) return;
        std::vector<SubsampleResult> fresh(want - have);
        parallel_for(fresh.size(), opts_.jobs, [&](std::size_t k) {
            fresh[k] = evaluate_prefix(acquired_, (have + k + 1) * q_, split_->validation, train_, opts_.per_user);
        });
        for (auto& r : fresh) {
            points_.push_back(r.point);
            if (opts_.per_user) user_errors_.push_back(std::move(r.user_errors));
        }
    }

    const DatasetSplit* split_;
    PolicyConfig policy_;
    std::size_t q_;
    TrainConfig train_;
    std::uint64_t seed_;
    RunOptions opts_;

    std::vector<RatingTriple> acquired_;
    std::vector<bool> alive_;
    std::size_t remaining_ = 0;
    std::vector<std::string> users_, items_;
    std::optional<ObservedMatrix> matrix_;
    std::vector<std::size_t> cumulative_;
    std::vector<PerformancePoint> points_;
    std::vector<std::map<std::string, ErrorSum>> user_errors_;
};

/// Everything a collection produces independent of the stopping rule. A
/// trace is complete when the pool was exhausted; otherwise it ends once
/// every requested run had decided.
struct CollectionTrace {
    PolicyKind policy = PolicyKind::Random;
    std::size_t q = 0;
    std::uint64_t seed = 0;
    std::size_t initial_size = 0;
    std::size_t pool_size = 0;
    bool complete = false;
    std::vector<RatingTriple> acquired;  // initial prefix, then acquisitions
    std::vector<std::size_t> cumulative_sizes;
    std::vector<PerformancePoint> points;
    std::vector<std::map<std::string, ErrorSum>> user_errors;  // per point, when requested
    std::vector<std::string> users;
};

namespace detail {

inline CollectionTrace snapshot(const Collector& c, PolicyKind policy, std::uint64_t seed) {
    return {policy,      c.q(),        seed,       c.initial_size(),      c.pool_size(),
            c.exhausted(), c.acquired(), c.cumulative_sizes(), c.points(), c.user_errors(),
            c.users()};
}

}  // namespace detail

/// Collects until the pool is exhausted.
inline CollectionTrace collect(const DatasetSplit& split, const PolicyConfig& policy, std::size_t q,
                               const TrainConfig& train_cfg, std::uint64_t seed, RunOptions opts = {}) {
    Collector c(split, policy, q, train_cfg, seed, opts);
    while (!c.exhausted()) c.step();
    return detail::snapshot(c, policy.kind, seed);
}

// ---------------------------------------------------------------------------
// Runs

struct BatchRecord {
    std::size_t acquired_count = 0;
    std::size_t cumulative_size = 0;
    std::vector<PerformancePoint> points;
    std::optional<FitReport> fit;
    std::optional<double> slope_estimate;
    std::optional<double> relative_fraction;
    bool stopped = false;
};

struct MinimizationRun {
    std::vector<BatchRecord> batches;
    double final_fraction = 1.0;
    std::size_t stop_size = 0;
    bool stopped = false;
    PolicyKind policy = PolicyKind::Random;
    Method method = Method::Piecewise3;
    StoppingRule rule;
    std::uint64_t seed = 0;
    std::size_t q = 0;
    std::size_t initial_size = 0;
    std::size_t pool_size = 0;
    std::vector<PerformancePoint> reference_points;  // oracle runs only
    std::optional<std::string> failure;
};

struct BatchEvaluation {
    std::optional<FitReport> fit;
    std::optional<double> slope;
    std::optional<double> relative_fraction;
    bool stop = false;
};

/// Per-run slope estimation and rule evaluation for one method.
class MethodEvaluator {
public:
    MethodEvaluator(Method method, StoppingRule rule, RunOptions opts, std::size_t q, std::size_t initial_size,
                    std::size_t pool_size)
        : method_(method), rule_(rule), opts_(opts), q_(q), initial_size_(initial_size), pool_size_(pool_size) {
        rule_.validate();
    }

    /// points: the prefix grid available at current_size. reference: the
    /// point set the oracle looks ahead into; it must reach two points past
    /// the current one unless it is the complete set.
    BatchEvaluation evaluate(std::span<const PerformancePoint> points, std::size_t current_size,
                             std::span<const PerformancePoint> reference = {}) {
        BatchEvaluation ev;
        if (points.size() < std::max<std::size_t>(opts_.warmup(), 2)) return ev;
        const auto x = static_cast<double>(current_size);
        switch (method_) {
            case Method::Naive: ev.slope = naive_slope(points); break;
            case Method::Oracle: {
                const std::size_t i = points.size() - 1;
                if (reference.size() < points.size()) throw Error("oracle needs the reference point set");
                ev.slope = i + 2 < reference.size() ? oracle_slope(reference, i, q_)
                                                    : naive_slope(reference.first(i + 1));
                break;
            }
            case Method::PowerLaw2PInitial: {
                if (!initial_fit_) {
                    std::vector<PerformancePoint> initial;
                    for (const auto& p : points)
                        if (p.size <= initial_size_) initial.push_back(p);
                    initial_fit_ = fit_single(CurveFamily::PowerLaw2P, initial);
                }
                ev.fit = *initial_fit_;
                break;
            }
            default: ev.fit = fit_curve(*curve_family(method_), points, {opts_.min_points}); break;
        }
        if (ev.fit) ev.slope = slope(ev.fit->curve, x);

        if (rule_.kind == RuleKind::Returns) {
            ev.stop = evaluate_returns_rule(*ev.slope, rule_.threshold, rule_.literal_comparison) == Decision::Stop;
        } else {
            if (!ev.fit)
                throw Error("the relative rule needs a fitted curve; method " + std::string(to_string(method_)) +
                            " has none");
            const auto rel = evaluate_relative_rule(ev.fit->curve, x, static_cast<double>(initial_size_),
                                                    static_cast<double>(initial_size_ + pool_size_), rule_.threshold);
            ev.relative_fraction = rel.fraction;
            ev.stop = rel.decision == Decision::Stop;
        }
        return ev;
    }

private:
    Method method_;
    StoppingRule rule_;
    RunOptions opts_;
    std::size_t q_, initial_size_, pool_size_;
    std::optional<FitReport> initial_fit_;
};

/// Builds one run by consuming a growing trace batch by batch.
class RunBuilder {
public:
    RunBuilder(const CollectionTrace& trace, Method method, StoppingRule rule, RunOptions opts = {})
        : eval_(method, rule, opts, trace.q, trace.initial_size, trace.pool_size) {
        run_.policy = trace.policy;
        run_.method = method;
        run_.rule = rule;
        run_.seed = trace.seed;
        run_.q = trace.q;
        run_.initial_size = trace.initial_size;
        run_.pool_size = trace.pool_size;
    }

    bool decided() const noexcept { return run_.stopped || run_.failure.has_value(); }

    /// Evaluates every batch of the trace whose decision is already
    /// determined; returns true once the run has stopped. A failing
    /// evaluation ends the run with its message recorded.
    bool advance(const CollectionTrace& trace) {
        try {
            consume(trace);
        } catch (const std::exception& e) {
            run_.failure = e.what();
        }
        return decided();
    }

    MinimizationRun finish(const CollectionTrace& trace) && {
        if (!decided() && !trace.complete) throw Error("run finished before it was decided");
        run_.stop_size = run_.batches.empty() ? run_.initial_size : run_.batches.back().cumulative_size;
        if (run_.failure)
            run_.final_fraction = std::numeric_limits<double>::quiet_NaN();
        else if (run_.stopped && run_.pool_size > 0)
            run_.final_fraction = static_cast<double>(run_.stop_size - run_.initial_size) /
                                  static_cast<double>(run_.pool_size);
        else
            run_.final_fraction = 1.0;
        if (run_.method == Method::Oracle) run_.reference_points = trace.points;
        return std::move(run_);
    }

private:
    void consume(const CollectionTrace& trace) {
        while (!run_.stopped && next_ < trace.cumulative_sizes.size()) {
            const std::size_t cum = trace.cumulative_sizes[next_];
            const std::size_t n = cum / trace.q;
            if (run_.method == Method::Oracle && !trace.complete && trace.points.size() < n + 2) break;
            const std::span<const PerformancePoint> pts(trace.points.data(), n);
            auto ev = eval_.evaluate(pts, cum, trace.points);
            const std::size_t prev = next_ == 0 ? trace.initial_size : trace.cumulative_sizes[next_ - 1];
            run_.batches.push_back({cum - prev, cum, {pts.begin(), pts.end()}, std::move(ev.fit), ev.slope,
                                    ev.relative_fraction, ev.stop});
            run_.stopped = ev.stop;
            ++next_;
        }
    }

    MethodEvaluator eval_;
    MinimizationRun run_;
    std::size_t next_ = 0;
};

/// Evaluates a method and rule on a collected trace, stopping at the first
/// batch whose rule fires.
inline MinimizationRun replay(const CollectionTrace& trace, Method method, const StoppingRule& rule,
                              RunOptions opts = {}) {
    RunBuilder b(trace, method, rule, opts);
    b.advance(trace);
    return std::move(b).finish(trace);
}

struct RunRequest {
    Method method = Method::Piecewise3;
    StoppingRule rule;
};

struct Simulation {
    CollectionTrace trace;
    std::vector<MinimizationRun> runs;  // one per request, same order
};

/// Collects only as far as the requests need: until every run has stopped
/// or the pool is exhausted. Each run equals its replay on a complete trace.
inline Simulation simulate_runs(const DatasetSplit& split, const PolicyConfig& policy, std::size_t q,
                                const TrainConfig& train_cfg, std::uint64_t seed,
                                std::span<const RunRequest> requests, RunOptions opts = {}) {
    for (const auto& r : requests) r.rule.validate();
    Collector c(split, policy, q, train_cfg, seed, opts);
    auto trace = detail::snapshot(c, policy.kind, seed);
    std::vector<RunBuilder> builders;
    builders.reserve(requests.size());
    for (const auto& r : requests) builders.emplace_back(trace, r.method, r.rule, opts);
    auto all_decided = [&] {
        return std::all_of(builders.begin(), builders.end(), [](const RunBuilder& b) { return b.decided(); });
    };
    while (!c.exhausted() && !all_decided()) {
        c.step();
        trace = detail::snapshot(c, policy.kind, seed);
        for (auto& b : builders) b.advance(trace);
    }
    Simulation out{std::move(trace), {}};
    for (auto& b : builders) out.runs.push_back(std::move(b).finish(out.trace));
    return out;
}

/// One run of the loop: acquire, rebuild points, refit, test the rule,
/// until the rule fires or the pool is empty. The oracle looks two grid
/// points past each batch before deciding it.
inline MinimizationRun run_minimization(const DatasetSplit& split, const PolicyConfig& policy, Method method,
                                        const StoppingRule& rule, std::size_t q, const TrainConfig& train_cfg,
                                        std::uint64_t seed, RunOptions opts = {}) {
    const RunRequest req{method, rule};
    return std::move(simulate_runs(split, policy, q, train_cfg, seed, {&req, 1}, opts).runs.front());
}

/// Re-derives the stop decision from a run's stored points; returns the
/// index of the stopping batch, or nullopt if no batch stops.
inline std::optional<std::size_t> replay_stop_batch(const MinimizationRun& run, RunOptions opts = {}) {
    MethodEvaluator eval(run.method, run.rule, opts, run.q, run.initial_size, run.pool_size);
    for (std::size_t b = 0; b < run.batches.size(); ++b) {
        const auto& rec = run.batches[b];
        if (eval.evaluate(rec.points, rec.cumulative_size, run.reference_points).stop) return b;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Per-user analysis

struct UserCurveResult {
    std::string user;
    std::size_t acquired_count = 0;
    std::vector<PerformancePoint> points;  // (size, user MSE)
    std::optional<FitReport> fit;
    std::optional<double> fitted_slope;      // curve slope at the stop size
    std::optional<double> empirical_return;  // last two user points
    std::string note;
};

struct UserCurveReport {
    std::size_t stop_size = 0;
    std::vector<UserCurveResult> users;
    std::vector<std::string> skipped;
    std::size_t increased_count = 0;  // users whose MSE rose over the last step
    std::map<std::string, std::size_t> acquired_counts;  // every user of the split
    double burden_gini = 0.0;
};

/// Per-user performance curves on the same subsample grid as the global
/// curve, up to stop_size. An empty `users` means every validation user.
inline UserCurveReport fit_user_curves(const CollectionTrace& trace, std::size_t stop_size,
                                       std::span<const std::string> users, CurveFamily family,
                                       PiecewiseOptions opts = {}) {
    if (trace.user_errors.size() != trace.points.size())
        throw Error("trace was collected without per-user errors");
    UserCurveReport report;
    report.stop_size = stop_size;
    for (const auto& u : trace.users) report.acquired_counts[u] = 0;
    for (std::size_t i = trace.initial_size; i < std::min(stop_size, trace.acquired.size()); ++i)
        ++report.acquired_counts[trace.acquired[i].user];
    bool any = false;
    for (const auto& [u, c] : report.acquired_counts) any = any || c > 0;
    if (any) report.burden_gini = acquisition_burden(report.acquired_counts);

    std::vector<std::string> wanted(users.begin(), users.end());
    if (wanted.empty()) {
        std::set<std::string> all;
        for (const auto& m : trace.user_errors)
            for (const auto& [u, e] : m) all.insert(u);
        wanted.assign(all.begin(), all.end());
    }
    const std::size_t grid = std::min(trace.points.size(), stop_size / std::max<std::size_t>(trace.q, 1));
    const std::size_t needed = is_piecewise(family) ? piece_count(family) * opts.min_points : param_count(family);

    for (const auto& user : wanted) {
        UserCurveResult r;
        r.user = user;
        auto ac = report.acquired_counts.find(user);
        r.acquired_count = ac == report.acquired_counts.end() ? 0 : ac->second;
        for (std::size_t k = 0; k < grid; ++k) {
            auto it = trace.user_errors[k].find(user);
            if (it != trace.user_errors[k].end()) r.points.push_back({trace.points[k].size, it->second.mean()});
        }
        if (r.points.empty()) {
            report.skipped.push_back(user);
            continue;
        }
        if (r.points.size() >= 2) {
            r.empirical_return = naive_slope(r.points);
            if (*r.empirical_return > 0.0) ++report.increased_count;
        }
        if (r.points.size() >= needed) {
            try {
                r.fit = fit_curve(family, r.points, opts);
                r.fitted_slope = slope(r.fit->curve, static_cast<double>(stop_size));
            } catch (const Error& e) {
                r.note = e.what();
            }
        } else {
            r.note = "too few points to fit";
        }
        report.users.push_back(std::move(r));
    }
    return report;
}

}  // namespace datamin
