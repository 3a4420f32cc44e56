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
// datamin: command-line harness for data-minimization simulations.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datamin/dataset.hpp"
#include "datamin/experiment.hpp"
#include "datamin/fit.hpp"
#include "datamin/io.hpp"

namespace fs = std::filesystem;
using namespace datamin;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitFailedCells = 1;
constexpr int kExitConfig = 2;

struct Options {
    std::string out = "datamin-out";
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t jobs = 1;
    std::size_t train_jobs = 1;
    std::vector<std::string> thresholds{"-5e-7", "-2e-7", "-5e-8"};
    std::vector<std::string> q{"0.02"};
    std::string policy = "random";
    std::vector<std::string> family;
    std::string rule = "returns";
    bool literal = false;

    std::string dataset = "synthetic";
    std::string ratings;
    std::size_t min_user_ratings = 0;
    SyntheticRatingsSpec corpus = benchmark_corpus();

    TrainConfig train;
    std::size_t min_points = 3;
    std::size_t warmup = 0;
    std::vector<std::size_t> stability_ranks{1, 2, 3, 4, 5};
    QbcOptions qbc;
    std::size_t impute_iterations = 20;

    // subcommand-specific
    std::string points;
    std::vector<std::string> q_list{"0.005", "0.01", "0.02", "0.03", "0.04", "0.05", "0.06", "0.07"};
    std::string report_method = "piecewise3";
    std::string report_threshold = "-2e-7";
    std::string report_family = "piecewise3";
    std::string synth_kind = "ratings";
    std::vector<std::string> pieces{"1:0.05", "1:0.6", "1:0.1"};
    std::vector<double> changepoints;
    std::size_t sizes_from = 20, sizes_step = 20, sizes_count = 50;
    double curve_noise = 0.0;
    bool continuous = true;
};

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Method method_or_throw(const std::string& s) {
    auto m = parse_method(s);
    if (!m) throw ConfigError("unknown method '" + s + "'");
    return *m;
}

CurveFamily family_or_throw(const std::string& s) {
    auto f = parse_curve_family(s);
    if (!f) throw ConfigError("unknown curve family '" + s + "'");
    return *f;
}

ExperimentConfig build_config(const Options& o) {
    ExperimentConfig cfg;
    cfg.dataset = o.dataset;
    if (!o.ratings.empty()) cfg.ratings = o.ratings;
    cfg.synthetic = o.corpus;
    cfg.min_user_ratings = o.min_user_ratings;
    if (o.q.size() != 1) throw ConfigError("--q takes one value here; use sweep-q for a list");
    cfg.q = parse_query_size(o.q.front());
    auto policy = parse_policy(o.policy);
    if (!policy) throw ConfigError("unknown policy '" + o.policy + "'");
    cfg.policy.kind = *policy;
    cfg.policy.ranks = o.stability_ranks;
    cfg.policy.qbc = o.qbc;
    cfg.policy.impute.iterations = o.impute_iterations;
    if (!o.family.empty()) {
        cfg.methods.clear();
        for (const auto& f : o.family) cfg.methods.push_back(method_or_throw(f));
    }
    auto rule = parse_rule_kind(o.rule);
    if (!rule) throw ConfigError("unknown rule '" + o.rule + "'");
    cfg.rule = *rule;
    cfg.literal_comparison = o.literal;
    cfg.thresholds.clear();
    for (const auto& t : o.thresholds) cfg.thresholds.push_back(parse_threshold(t));
    cfg.seeds = o.seeds;
    cfg.train = o.train;
    cfg.run.min_points = o.min_points;
    cfg.run.warmup_points = o.warmup;
    cfg.run.jobs = o.train_jobs;
    cfg.jobs = o.jobs;
    cfg.report_method = method_or_throw(o.report_method);
    cfg.report_threshold = parse_threshold(o.report_threshold);
    cfg.report_family = family_or_throw(o.report_family);
    cfg.validate();
    return cfg;
}

void write_metadata(const fs::path& out, const std::string& command, int argc, char** argv) {
    Json args = Json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    write_json_file(out / "metadata.json",
                    Json{{"tool", "datamin"}, {"version", kVersion}, {"command", command}, {"argv", args},
                         {"created_at", timestamp()}});
}

int report_failures(const GridResult& grid) {
    std::size_t failed = 0;
    for (const auto& r : grid.rows)
        if (r.status != "ok") {
            if (failed++ < 5)
                std::cerr << "cell failed (method " << r.method << ", t=" << format_double(r.threshold) << ", seed "
                          << r.seed << "): " << r.status << '\n';
        }
    if (failed > 0) std::cerr << failed << " of " << grid.rows.size() << " runs failed\n";
    return failed > 0 ? kExitFailedCells : 0;
}

int cmd_splits(const Options& o) {
    auto cfg = build_config(o);
    const auto plan = plan_seed(cfg, cfg.seeds.front());
    const auto split = prepare_split(cfg, plan);
    auto manifest = split_manifest(split);
    manifest["experiment_seed"] = plan.seed;
    write_json_file(fs::path(o.out) / "splits.json", manifest);
    std::cout << "initial " << split.initial.size() << ", validation " << split.validation.size() << ", test "
              << split.test.size() << ", pool " << split.pool.size() << '\n';
    return 0;
}

int cmd_fit(const Options& o) {
    if (o.points.empty()) throw ConfigError("fit needs --points");
    if (o.family.size() > 1) throw ConfigError("fit takes a single --family");
    const auto family = family_or_throw(o.family.empty() ? "piecewise3" : o.family.front());
    const auto points = load_points_csv(o.points);
    PiecewiseOptions opts;
    opts.min_points = o.min_points;
    const auto fit = fit_curve(family, points, opts);
    auto j = fit_json(fit);
    const double x = static_cast<double>(points.back().size);
    j["slope_at_max_size"] = json_number(slope(fit.curve, x));
    write_json_file(fs::path(o.out) / "fit.json", j);
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_simulate(const Options& o) {
    const auto cfg = build_config(o);
    const auto grid = simulate(cfg);
    write_grid(o.out, grid);
    std::cout << table_text(aggregate(grid.rows));
    return report_failures(grid);
}

int cmd_sweep_q(const Options& o) {
    auto cfg = build_config(o);
    std::vector<QuerySize> qs;
    for (const auto& q : o.q_list) qs.push_back(parse_query_size(q));
    const auto grid = run_grid(cfg, qs);
    write_grid(o.out, grid);
    std::cout << table_text(aggregate(grid.rows));
    return report_failures(grid);
}

int cmd_user_report(const Options& o) {
    const auto cfg = build_config(o);
    const auto cells = user_report(cfg);
    write_user_report(o.out, cfg, cells);
    int status = 0;
    for (const auto& c : cells) {
        if (c.failure) {
            std::cerr << "seed " << c.plan.seed << " failed: " << *c.failure << '\n';
            status = kExitFailedCells;
            continue;
        }
        if (!c.report.skipped.empty())
            std::cerr << "seed " << c.plan.seed << ": skipped " << c.report.skipped.size()
                      << " users without validation data\n";
        std::cout << "seed " << c.plan.seed << ": stop at " << c.run.stop_size << " (fraction "
                  << format_double(c.run.final_fraction) << "), gini " << format_double(c.report.burden_gini)
                  << ", " << c.report.increased_count << " of " << c.report.users.size()
                  << " users with rising MSE\n";
    }
    return status;
}

int cmd_synth(const Options& o) {
    const fs::path out(o.out);
    if (o.synth_kind == "ratings") {
        auto spec = o.corpus;
        spec.seed = o.seeds.front();
        std::ostringstream os;
        os << "user,item,rating\n";
        for (const auto& t : gen_synthetic_ratings(spec))
            os << t.user << ',' << t.item << ',' << format_double(t.value) << '\n';
        write_text_file(out / "ratings.csv", os.str());
        return 0;
    }
    if (o.synth_kind != "curve") throw ConfigError("unknown synth kind '" + o.synth_kind + "'");
    SyntheticCurveSpec spec;
    for (const auto& p : o.pieces) {
        const auto colon = p.find(':');
        double a = 0.0, b = 0.0;
        if (colon == std::string::npos || !detail::parse_double(p.substr(0, colon), a) ||
            !detail::parse_double(p.substr(colon + 1), b))
            throw ConfigError("piece '" + p + "' is not a:b");
        spec.pieces.push_back({a, b});
    }
    spec.changepoints = o.changepoints;
    if (spec.changepoints.empty() && spec.pieces.size() == 3) spec.changepoints = {200, 700};
    if (o.continuous && spec.pieces.size() == spec.changepoints.size() + 1)
        for (std::size_t k = 1; k < spec.pieces.size(); ++k) {
            const double t = spec.changepoints[k - 1];
            spec.pieces[k].a = eval_power(spec.pieces[k - 1].a, spec.pieces[k - 1].b, t) * std::pow(t, spec.pieces[k].b);
        }
    spec.noise_sd = o.curve_noise;
    for (std::size_t k = 0; k < o.sizes_count; ++k) spec.sizes.push_back(o.sizes_from + k * o.sizes_step);
    const auto points = gen_performance_points(spec, o.seeds.front());
    std::ostringstream os;
    write_points_csv(os, points);
    write_text_file(out / "points.csv", os.str());
    Json pieces = Json::array();
    for (const auto& p : spec.pieces) pieces.push_back({{"a", p.a}, {"b", p.b}});
    const std::string family = spec.pieces.size() == 1 ? "2p-pl" : "piecewise" + std::to_string(spec.pieces.size());
    write_json_file(out / "truth.json", Json{{"family", family},
                                             {"pieces", pieces},
                                             {"changepoints", spec.changepoints},
                                             {"noise_sd", spec.noise_sd},
                                             {"seed", o.seeds.front()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app("Simulate performance-based data minimization: collect in batches, refit the performance "
                 "curve, stop when the return on more data falls below a threshold.");
    app.set_config("--config", "", "INI/TOML config file; flags override file values");
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    app.add_option("--out", o.out, "Output directory")->envname("DATAMIN_OUT")->capture_default_str();
    app.add_option("--seed", o.seeds, "Seeds (repeatable)")->capture_default_str();
    app.add_option("--jobs", o.jobs, "Concurrent cells")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--train-jobs", o.train_jobs, "Concurrent subsample trainings per batch")
        ->check(CLI::PositiveNumber);
    app.add_option("--threshold", o.thresholds,
                   "Stopping thresholds (repeatable); negative slopes for the returns rule, gain fractions in "
                   "(0, 1] for the relative rule, 'never' for no stop")
        ->capture_default_str();
    app.add_option("--q", o.q, "Query size: integer count or fraction of the pool")->capture_default_str();
    app.add_option("--policy", o.policy, "Acquisition policy")
        ->check(CLI::IsMember({"random", "stability", "qbc"}))
        ->capture_default_str();
    std::vector<std::string> method_ids;
    for (auto m : kAllMethods) method_ids.emplace_back(to_string(m));
    app.add_option("--family", o.family, "Curve family or method (repeatable); default: every method")
        ->check(CLI::IsMember(method_ids));
    app.add_option("--rule", o.rule,
                   "returns: stop when the curve slope is at least t; relative: stop when the predicted share of "
                   "the remaining improvement reaches g (our own definition)")
        ->check(CLI::IsMember({"returns", "relative"}))
        ->capture_default_str();
    app.add_flag("--literal-comparison", o.literal, "Stop when slope <= t instead of slope >= t");

    app.add_option("--dataset", o.dataset, "Dataset label in summaries")->capture_default_str();
    app.add_option("--ratings", o.ratings, "Ratings CSV (user,item,rating); default: synthetic corpus")
        ->check(CLI::ExistingFile);
    app.add_option("--min-user-ratings", o.min_user_ratings, "Drop users with fewer ratings first");
    app.add_option("--corpus-users", o.corpus.n_users)->capture_default_str();
    app.add_option("--corpus-items", o.corpus.n_items)->capture_default_str();
    app.add_option("--corpus-rank", o.corpus.rank)->capture_default_str();
    app.add_option("--corpus-density", o.corpus.density)->capture_default_str();
    app.add_option("--corpus-noise", o.corpus.noise_sd)->capture_default_str();
    app.add_option("--corpus-scale", o.corpus.scale)->capture_default_str();
    app.add_option("--corpus-offset", o.corpus.offset)->capture_default_str();
    app.add_option("--corpus-bias", o.corpus.bias_sd)->capture_default_str();
    app.add_option("--corpus-seed", o.corpus.seed, "Base seed mixed with each run seed")->capture_default_str();

    app.add_option("--rank", o.train.rank, "Latent factors")->capture_default_str();
    app.add_option("--learning-rate", o.train.learning_rate)->capture_default_str();
    app.add_option("--regularization", o.train.regularization)->capture_default_str();
    app.add_option("--epochs", o.train.epochs)->capture_default_str();
    app.add_option("--min-points", o.min_points, "Points per curve piece")->capture_default_str();
    app.add_option("--warmup", o.warmup, "Points before the rule is evaluated (0: 3 * min-points)");
    app.add_option("--stability-ranks", o.stability_ranks)->capture_default_str();
    app.add_option("--qbc-rank", o.qbc.svd_rank)->capture_default_str();
    app.add_option("--qbc-k", o.qbc.k)->capture_default_str();
    app.add_option("--impute-iterations", o.impute_iterations)->capture_default_str();

    auto* splits = app.add_subcommand("splits", "Write the stratified split manifest for the first seed");
    auto* fit = app.add_subcommand("fit", "Fit a curve family to a size,value CSV");
    fit->add_option("--points", o.points, "Points CSV")->check(CLI::ExistingFile);
    auto* sim = app.add_subcommand("simulate", "Run every method x threshold x seed cell");
    auto* sweep = app.add_subcommand("sweep-q", "Repeat simulate over a list of query sizes");
    sweep->add_option("--q-list", o.q_list, "Query sizes")->capture_default_str();
    auto* report = app.add_subcommand("user-report", "Per-user curves and acquisition burden at the stop");
    report->add_option("--method", o.report_method, "Method that decides the stop")
        ->check(CLI::IsMember(method_ids))
        ->capture_default_str();
    report->add_option("--at-threshold", o.report_threshold, "Stopping threshold")->capture_default_str();
    report->add_option("--user-family", o.report_family, "Curve family for per-user fits")->capture_default_str();
    auto* synth = app.add_subcommand("synth", "Generate fixtures: a ratings corpus or a piecewise curve");
    synth->add_option("--kind", o.synth_kind)->check(CLI::IsMember({"ratings", "curve"}))->capture_default_str();
    synth->add_option("--piece", o.pieces, "a:b for a * x^-b (repeatable)")->capture_default_str();
    synth->add_option("--changepoint", o.changepoints, "Repeatable; three pieces default to 200 and 700");
    synth->add_option("--sizes-from", o.sizes_from)->capture_default_str();
    synth->add_option("--sizes-step", o.sizes_step)->capture_default_str();
    synth->add_option("--sizes-count", o.sizes_count)->capture_default_str();
    synth->add_option("--noise", o.curve_noise)->capture_default_str();
    synth->add_flag("--continuous,!--no-continuous", o.continuous,
                    "Derive each later piece's a so the curve is continuous (default on)");
    for (auto* s : {splits, fit, sim, sweep, report, synth}) s->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        int status = 0;
        std::string command;
        if (splits->parsed()) command = "splits", status = cmd_splits(o);
        else if (fit->parsed()) command = "fit", status = cmd_fit(o);
        else if (sim->parsed()) command = "simulate", status = cmd_simulate(o);
        else if (sweep->parsed()) command = "sweep-q", status = cmd_sweep_q(o);
        else if (report->parsed()) command = "user-report", status = cmd_user_report(o);
        else command = "synth", status = cmd_synth(o);
        write_metadata(o.out, command, argc, argv);
        return status;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailedCells;
    }
}
