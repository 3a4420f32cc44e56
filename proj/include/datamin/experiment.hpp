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

// Seeded experiment grids over thresholds, methods and query sizes, and the
// files they emit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "datamin/acquisition.hpp"
#include "datamin/dataset.hpp"
#include "datamin/error.hpp"
#include "datamin/io.hpp"
#include "datamin/minimizer.hpp"
#include "datamin/parallel.hpp"
#include "datamin/random.hpp"
#include "datamin/recommender.hpp"

namespace datamin {

inline constexpr double kNeverStop = -std::numeric_limits<double>::infinity();

/// Low-rank corpus with user and item biases whose validation curve
/// flattens within the pool at the default thresholds.
inline SyntheticRatingsSpec benchmark_corpus() {
    SyntheticRatingsSpec s;
    s.n_users = 200;
    s.n_items = 200;
    s.density = 0.3;
    s.rank = 2;
    s.bias_sd = 1.0;
    s.scale = 0.12;
    s.noise_sd = 0.05;
    s.offset = 3.0;
    return s;
}

/// A query size given as a count or as a fraction of the pool.
struct QuerySize {
    double value = 0.02;
    bool fraction = true;

    static QuerySize of_fraction(double f) { return {f, true}; }
    static QuerySize of_count(std::size_t n) { return {static_cast<double>(n), false}; }

    void validate() const {
        if (fraction && !(value > 0.0 && value <= 1.0)) throw ConfigError("q fraction must lie in (0, 1]");
        if (!fraction && !(value >= 1.0 && value == std::floor(value))) throw ConfigError("q count must be >= 1");
    }

    /// ceil(fraction * pool), or the count itself.
    std::size_t resolve(std::size_t pool) const {
        validate();
        if (!fraction) return static_cast<std::size_t>(value);
        const double raw = value * static_cast<double>(pool);
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw))));
    }

    std::string label() const { return fraction ? format_double(value) : std::to_string(static_cast<std::size_t>(value)); }
};

/// "never" and "-inf" name the threshold that never stops.
inline double parse_threshold(std::string_view s) {
    s = detail::trim(s);
    if (s == "never" || s == "-inf") return kNeverStop;
    double x = 0.0;
    if (!detail::parse_double(s, x)) throw ConfigError("invalid threshold '" + std::string(s) + "'");
    return x;
}

/// Integer text is a count; anything else is a fraction.
inline QuerySize parse_query_size(std::string_view s) {
    s = detail::trim(s);
    double x = 0.0;
    if (!detail::parse_double(s, x)) throw ConfigError("invalid q '" + std::string(s) + "'");
    const bool integral = s.find_first_of(".eE") == std::string_view::npos;
    QuerySize q = integral ? QuerySize{x, false} : QuerySize{x, true};
    q.validate();
    return q;
}

struct ExperimentConfig {
    std::string dataset = "synthetic";
    std::optional<std::filesystem::path> ratings;  // otherwise the synthetic corpus
    SyntheticRatingsSpec synthetic = benchmark_corpus();
    std::size_t min_user_ratings = 0;  // drop users below this count first

    QuerySize q;
    PolicyConfig policy;
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    RuleKind rule = RuleKind::Returns;
    bool literal_comparison = false;
    std::vector<double> thresholds{-5e-7, -2e-7, -5e-8};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    TrainConfig train;
    RunOptions run;
    std::size_t jobs = 1;  // concurrent cells

    // user-report
    Method report_method = Method::Piecewise3;
    double report_threshold = -2e-7;
    CurveFamily report_family = CurveFamily::Piecewise3;

    StoppingRule make_rule(double threshold) const { return {rule, threshold, literal_comparison}; }

    void validate() const {
        if (thresholds.empty()) throw ConfigError("threshold list is empty");
        if (seeds.empty()) throw ConfigError("seed list is empty");
        if (methods.empty()) throw ConfigError("method list is empty");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        q.validate();
        train.validate();
        for (double t : thresholds) make_rule(t).validate();
        if (rule == RuleKind::Relative)
            for (auto m : methods)
                if (!curve_family(m))
                    throw ConfigError("the relative rule needs a fitted curve; method " + std::string(to_string(m)) +
                                      " has none");
        StoppingRule::returns(report_threshold).validate();
    }
};

// ---------------------------------------------------------------------------
// Cells

/// Per-seed derived streams.
struct SeedPlan {
    std::uint64_t seed = 0;
    std::uint64_t corpus = 0;
    std::uint64_t split = 0;
    std::uint64_t train = 0;
};

inline SeedPlan plan_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    return {seed, mix_seed(cfg.synthetic.seed, seed), mix_seed(seed, 0x51), mix_seed(seed, 0x7a)};
}

inline Triples load_corpus(const ExperimentConfig& cfg, const SeedPlan& plan) {
    Triples data;
    if (cfg.ratings) {
        data = load_ratings(*cfg.ratings);
    } else {
        auto spec = cfg.synthetic;
        spec.seed = plan.corpus;
        data = gen_synthetic_ratings(spec);
    }
    if (cfg.min_user_ratings > 0) data = filter_min_ratings(data, cfg.min_user_ratings);
    return data;
}

inline DatasetSplit prepare_split(const ExperimentConfig& cfg, const SeedPlan& plan) {
    return make_splits(load_corpus(cfg, plan), plan.split);
}

struct CellResult {
    QuerySize q_spec;
    SeedPlan plan;
    std::size_t q = 0;
    std::vector<MinimizationRun> runs;  // methods x thresholds, method-major
    std::optional<std::string> failure;
};

inline CellResult run_cell(const ExperimentConfig& cfg, QuerySize q_spec, std::uint64_t seed) {
    CellResult cell{q_spec, plan_seed(cfg, seed), 0, {}, {}};
    try {
        const auto split = prepare_split(cfg, cell.plan);
        cell.q = q_spec.resolve(split.pool.size());
        std::vector<RunRequest> requests;
        for (auto m : cfg.methods)
            for (double t : cfg.thresholds) requests.push_back({m, cfg.make_rule(t)});
        auto train = cfg.train;
        train.seed = cell.plan.train;
        auto sim = simulate_runs(split, cfg.policy, cell.q, train, seed, requests, cfg.run);
        cell.runs = std::move(sim.runs);
    } catch (const std::exception& e) {
        cell.failure = e.what();
    }
    return cell;
}

struct GridResult {
    std::vector<CellResult> cells;  // q-major, then seeds
    std::vector<SummaryRow> rows;

    bool any_failed() const {
        for (const auto& r : rows)
            if (r.status != "ok") return true;
        return false;
    }
};

/// Runs every (q, seed) cell under a bounded worker pool; results keep
/// configuration order.
inline GridResult run_grid(const ExperimentConfig& cfg, std::span<const QuerySize> qs) {
    cfg.validate();
    if (qs.empty()) throw ConfigError("q list is empty");
    for (const auto& q : qs) q.validate();
    GridResult grid;
    grid.cells.resize(qs.size() * cfg.seeds.size());
    parallel_for(grid.cells.size(), cfg.jobs, [&](std::size_t k) {
        grid.cells[k] = run_cell(cfg, qs[k / cfg.seeds.size()], cfg.seeds[k % cfg.seeds.size()]);
    });
    for (const auto& cell : grid.cells) {
        if (cell.failure) {
            for (auto m : cfg.methods)
                for (double t : cfg.thresholds) {
                    SummaryRow r;
                    r.dataset = cfg.dataset;
                    r.policy = to_string(cfg.policy.kind);
                    r.method = to_string(m);
                    r.rule = to_string(cfg.rule);
                    r.threshold = t;
                    r.q = cell.q;
                    r.seed = cell.plan.seed;
                    r.final_fraction = std::numeric_limits<double>::quiet_NaN();
                    r.status = "failed: " + *cell.failure;
                    grid.rows.push_back(std::move(r));
                }
            continue;
        }
        for (const auto& run : cell.runs) {
            auto r = summary_row(run, cfg.dataset);
            if (run.failure) r.status = "failed: " + *run.failure;
            grid.rows.push_back(std::move(r));
        }
    }
    return grid;
}

inline GridResult simulate(const ExperimentConfig& cfg) { return run_grid(cfg, {&cfg.q, 1}); }

// ---------------------------------------------------------------------------
// Aggregation

struct TableEntry {
    std::string policy, method, rule;
    double threshold = 0.0;
    std::size_t q = 0;
    double mean = 0.0, sd = 0.0;
    std::size_t n = 0;
};

/// Mean and sample standard deviation of final_fraction over seeds for each
/// (q, method, threshold), skipping failed rows.
inline std::vector<TableEntry> aggregate(std::span<const SummaryRow> rows) {
    using Key = std::tuple<std::size_t, std::string, double>;
    std::vector<Key> order;
    std::map<Key, std::vector<double>> values;
    std::map<Key, const SummaryRow*> first;
    for (const auto& r : rows) {
        Key k{r.q, r.method, r.threshold};
        if (!first.count(k)) {
            order.push_back(k);
            first[k] = &r;
        }
        if (r.status == "ok") values[k].push_back(r.final_fraction);
    }
    std::vector<TableEntry> out;
    for (const auto& k : order) {
        const auto& v = values[k];
        const auto* r = first[k];
        TableEntry e{r->policy, r->method, r->rule, r->threshold, r->q, 0.0, 0.0, v.size()};
        if (!v.empty()) {
            for (double x : v) e.mean += x;
            e.mean /= static_cast<double>(v.size());
            if (v.size() > 1) {
                double ss = 0.0;
                for (double x : v) ss += (x - e.mean) * (x - e.mean);
                e.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
            }
        } else {
            e.mean = e.sd = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(e);
    }
    return out;
}

inline std::string table_csv(std::span<const TableEntry> table) {
    std::ostringstream os;
    os << "policy,method,rule,threshold,q,mean,sd,n\n";
    for (const auto& e : table)
        os << e.policy << ',' << e.method << ',' << e.rule << ',' << format_double(e.threshold) << ',' << e.q << ','
           << format_double(e.mean) << ',' << format_double(e.sd) << ',' << e.n << '\n';
    return os.str();
}

/// Methods as rows, thresholds as columns, "mean ± sd" cells; one block per q.
inline std::string table_text(std::span<const TableEntry> table) {
    std::ostringstream os;
    std::vector<std::size_t> qs;
    for (const auto& e : table)
        if (std::find(qs.begin(), qs.end(), e.q) == qs.end()) qs.push_back(e.q);
    for (auto q : qs) {
        std::vector<std::string> methods;
        std::vector<double> thresholds;
        std::map<std::pair<std::string, double>, const TableEntry*> at;
        for (const auto& e : table) {
            if (e.q != q) continue;
            if (std::find(methods.begin(), methods.end(), e.method) == methods.end()) methods.push_back(e.method);
            if (std::find(thresholds.begin(), thresholds.end(), e.threshold) == thresholds.end())
                thresholds.push_back(e.threshold);
            at[{e.method, e.threshold}] = &e;
        }
        os << "q = " << q << '\n';
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-14s", "method");
        os << buf;
        for (double t : thresholds) {
            std::snprintf(buf, sizeof buf, " | %-13s", ("t=" + format_double(t)).c_str());
            os << buf;
        }
        os << '\n';
        for (const auto& m : methods) {
            std::snprintf(buf, sizeof buf, "%-14s", m.c_str());
            os << buf;
            for (double t : thresholds) {
                const auto* e = at[{m, t}];
                if (e->n == 0)
                    std::snprintf(buf, sizeof buf, " | %-13s", "failed");
                else
                    std::snprintf(buf, sizeof buf, " | %.2f ± %.2f  ", e->mean, e->sd);
                os << buf;
            }
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

inline std::filesystem::path trace_path(const std::filesystem::path& out, const MinimizationRun& run) {
    return out / "traces" / ("q" + std::to_string(run.q)) / std::string(to_string(run.method)) /
           ("t" + format_double(run.rule.threshold) + "_seed" + std::to_string(run.seed) + ".json");
}

/// summary.csv, table.csv, table.txt and one trace JSON per run.
inline void write_grid(const std::filesystem::path& out, const GridResult& grid) {
    std::ostringstream summary;
    write_summary_csv(summary, grid.rows);
    write_text_file(out / "summary.csv", summary.str());
    const auto table = aggregate(grid.rows);
    write_text_file(out / "table.csv", table_csv(table));
    write_text_file(out / "table.txt", table_text(table));
    for (const auto& cell : grid.cells)
        for (const auto& run : cell.runs) write_json_file(trace_path(out, run), run_json(run));
}

// ---------------------------------------------------------------------------
// Per-user report

struct UserReportCell {
    SeedPlan plan;
    std::size_t q = 0;
    MinimizationRun run;
    UserCurveReport report;
    std::optional<std::string> failure;
};

inline UserReportCell run_user_report_cell(const ExperimentConfig& cfg, std::uint64_t seed) {
    UserReportCell cell;
    cell.plan = plan_seed(cfg, seed);
    try {
        const auto split = prepare_split(cfg, cell.plan);
        cell.q = cfg.q.resolve(split.pool.size());
        auto train = cfg.train;
        train.seed = cell.plan.train;
        auto opts = cfg.run;
        opts.per_user = true;
        const RunRequest req{cfg.report_method, cfg.make_rule(cfg.report_threshold)};
        auto sim = simulate_runs(split, cfg.policy, cell.q, train, seed, {&req, 1}, opts);
        cell.run = std::move(sim.runs.front());
        if (cell.run.failure) throw Error(*cell.run.failure);
        cell.report = fit_user_curves(sim.trace, cell.run.stop_size, {}, cfg.report_family, {opts.min_points});
    } catch (const std::exception& e) {
        cell.failure = e.what();
    }
    return cell;
}

inline std::vector<UserReportCell> user_report(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<UserReportCell> cells(cfg.seeds.size());
    parallel_for(cells.size(), cfg.jobs, [&](std::size_t k) { cells[k] = run_user_report_cell(cfg, cfg.seeds[k]); });
    return cells;
}

/// "a0=..;b0=..;t0=..;a1=.." style flattening of curve parameters.
inline std::string params_string(const Curve& curve) {
    std::string out;
    auto add = [&](const std::string& k, double v) {
        if (!out.empty()) out += ';';
        out += k + '=' + format_double(v);
    };
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, PiecewisePowerLaw>) {
                for (std::size_t i = 0; i < c.pieces.size(); ++i) {
                    add("a" + std::to_string(i), c.pieces[i].a);
                    add("b" + std::to_string(i), c.pieces[i].b);
                    if (i < c.changepoints.size()) add("t" + std::to_string(i), c.changepoints[i]);
                }
            } else {
                add("a", c.a);
                add("b", c.b);
                if constexpr (!std::is_same_v<T, PowerLaw2P>) add("c", c.c);
            }
        },
        curve);
    return out;
}

inline void write_user_report(const std::filesystem::path& out, const ExperimentConfig& cfg,
                              std::span<const UserReportCell> cells) {
    std::ostringstream users, burden;
    users << "seed,user,acquired_count,points,empirical_return,fitted_slope,family,params,note\n";
    burden << "seed,policy,method,threshold,q,stop_size,final_fraction,gini,increased_users,reported_users,"
              "skipped_users,status\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& c : cells) {
        const auto seed = c.plan.seed;
        if (c.failure) {
            burden << seed << ',' << to_string(cfg.policy.kind) << ',' << to_string(cfg.report_method) << ','
                   << format_double(cfg.report_threshold) << ',' << c.q << ",0,nan,nan,0,0,0,"
                   << csv_field("failed: " + *c.failure) << '\n';
            continue;
        }
        for (const auto& u : c.report.users)
            users << seed << ',' << csv_field(u.user) << ',' << u.acquired_count << ',' << u.points.size() << ','
                  << opt(u.empirical_return) << ',' << opt(u.fitted_slope) << ','
                  << (u.fit ? std::string(to_string(family_of(u.fit->curve))) : std::string()) << ','
                  << csv_field(u.fit ? params_string(u.fit->curve) : std::string()) << ',' << csv_field(u.note)
                  << '\n';
        burden << seed << ',' << to_string(cfg.policy.kind) << ',' << to_string(cfg.report_method) << ','
               << format_double(cfg.report_threshold) << ',' << c.q << ',' << c.run.stop_size << ','
               << format_double(c.run.final_fraction) << ',' << format_double(c.report.burden_gini) << ','
               << c.report.increased_count << ',' << c.report.users.size() << ',' << c.report.skipped.size()
               << ",ok\n";
    }
    write_text_file(out / "user_report.csv", users.str());
    write_text_file(out / "burden.csv", burden.str());
}

}  // namespace datamin
