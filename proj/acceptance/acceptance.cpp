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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datamin/acquisition.hpp"
#include "datamin/experiment.hpp"
#include "datamin/fit.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace datamin {
namespace {

namespace fs = std::filesystem;
using testing::Gen;
using testing::M;

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1e-300, std::abs(want)); }

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (double x : v) out += (out.empty() ? "" : " ") + fmt("%.2f", x);
    return out;
}

// ---------------------------------------------------------------------------
// 1. Curve recovery

bool extreme_middle(const PiecewisePowerLaw& c) {
    const double b0 = c.pieces[0].b, b1 = c.pieces[1].b, b2 = c.pieces[2].b;
    return (b1 > b0 && b1 > b2) || (b1 < b0 && b1 < b2);
}

Outcome curve_recovery() {
    Gen g(101);
    double worst = 0.0, slowest = 0.0;
    std::size_t fits = 0, cp_misses = 0;
    auto timed = [&](CurveFamily family, const std::vector<PerformancePoint>& pts) {
        Stopwatch w;
        auto f = fit_curve(family, pts);
        slowest = std::max(slowest, w.seconds());
        ++fits;
        return f.curve;
    };
    const auto sizes = testing::grid(50, 50, 40);
    for (int trial = 0; trial < 10; ++trial) {
        const PowerLaw2P p2{g.log_uniform(0.5, 20.0), g.uniform(0.1, 1.2)};
        const PowerLaw3P p3{g.log_uniform(0.5, 20.0), g.uniform(0.2, 1.2), g.uniform(0.05, 0.5)};
        const PowerLawExp3P pe{g.uniform(-0.8, -0.1), -g.log_uniform(1e-4, 1e-3), g.uniform(0.05, 0.5)};
        const auto c2 = std::get<PowerLaw2P>(
            timed(CurveFamily::PowerLaw2P, testing::sample([&](double x) { return eval_curve(p2, x); }, sizes)));
        const auto c3 = std::get<PowerLaw3P>(
            timed(CurveFamily::PowerLaw3P, testing::sample([&](double x) { return eval_curve(p3, x); }, sizes)));
        const auto ce = std::get<PowerLawExp3P>(
            timed(CurveFamily::PowerLawExp3P, testing::sample([&](double x) { return eval_curve(pe, x); }, sizes)));
        for (double e : {rel_err(c2.a, p2.a), rel_err(c2.b, p2.b), rel_err(c3.a, p3.a), rel_err(c3.b, p3.b),
                         rel_err(c3.c, p3.c), rel_err(ce.a, pe.a), rel_err(ce.b, pe.b), rel_err(ce.c, pe.c)})
            worst = std::max(worst, e);
    }
    // Kinks sit strictly between two grid sizes; the expected changepoint is
    // the last size below the kink.
    for (std::size_t pieces : {2u, 3u}) {
        for (int trial = 0; trial < 10; ++trial) {
            auto fx = testing::random_piecewise(g, pieces, g.index(40, 60), 3, g.uniform(0.1, 0.9));
            while (pieces == 3 && !extreme_middle(fx.curve))
                fx = testing::random_piecewise(g, pieces, g.index(40, 60), 3, g.uniform(0.1, 0.9));
            const auto pts = testing::sample([&](double x) { return eval_curve(fx.curve, x); }, fx.sizes);
            const auto c = std::get<PiecewisePowerLaw>(
                timed(pieces == 2 ? CurveFamily::Piecewise2 : CurveFamily::Piecewise3, pts));
            for (std::size_t k = 0; k + 1 < pieces; ++k)
                if (c.changepoints[k] != static_cast<double>(fx.sizes[fx.changepoint_index[k]])) ++cp_misses;
            for (std::size_t k = 0; k < pieces; ++k)
                worst = std::max({worst, rel_err(c.pieces[k].a, fx.curve.pieces[k].a),
                                  rel_err(c.pieces[k].b, fx.curve.pieces[k].b)});
        }
    }
    return {worst <= 1e-4 && cp_misses == 0 && slowest < 5.0,
            fmt("%zu fits, max rel err %.2e, changepoint misses %zu, slowest fit %.3f s", fits, worst, cp_misses,
                slowest)};
}

// ---------------------------------------------------------------------------
// 2. Exhaustive-scan equivalence

Outcome exhaustive_scan() {
    Gen g(202);
    double worst = 0.0, fit_time = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto fx = testing::random_piecewise(g, 3, g.index(20, 60));
        const auto pts = testing::sample([&](double x) { return eval_curve(fx.curve, x); }, fx.sizes);
        Stopwatch w;
        const auto f = fit_piecewise(pts, 3);
        fit_time += w.seconds();
        const auto oracle = testing::exhaustive_double_scan(pts, 3);
        worst = std::max(worst, std::abs(piecewise_objective(std::get<PiecewisePowerLaw>(f.curve)) - oracle.objective));
    }
    return {worst <= 1e-9 && fit_time < 30.0,
            fmt("10 fixtures, max |objective gap| %.2e, fit time %.2f s", worst, fit_time)};
}

// ---------------------------------------------------------------------------
// 3. Slope correctness

Outcome slope_correctness() {
    Gen g(303);
    double worst = 0.0;
    std::size_t checks = 0;
    auto central = [](const Curve& c, double x) {
        const double h = 1e-4 * x;
        return (eval_curve(c, x + h) - eval_curve(c, x - h)) / (2.0 * h);
    };
    auto piece = [&] { return PowerLawPiece{g.log_uniform(0.1, 10.0), g.uniform(0.0, 1.5)}; };
    for (int trial = 0; trial < 20; ++trial) {
        const double x = g.log_uniform(2.0, 5000.0);
        const std::vector<Curve> curves{
            PowerLaw2P{g.log_uniform(0.1, 10.0), g.uniform(-0.5, 2.0)},
            PowerLaw3P{g.log_uniform(0.1, 10.0), g.uniform(-0.5, 2.0), g.uniform(-1.0, 1.0)},
            PowerLawExp3P{g.uniform(-2.0, 0.5), -g.log_uniform(1e-5, 1e-2), g.uniform(0.0, 1.0)},
            PiecewisePowerLaw{{piece(), piece()}, {x * (g.coin() ? g.uniform(0.2, 0.9) : g.uniform(1.1, 3.0))}},
            PiecewisePowerLaw{{piece(), piece(), piece()},
                              g.coin() ? std::vector<double>{x * g.uniform(0.2, 0.5), x * g.uniform(0.6, 0.9)}
                                       : std::vector<double>{x * g.uniform(0.2, 0.9), x * g.uniform(1.1, 3.0)}},
        };
        for (const auto& c : curves) {
            const double s = slope(c, x);
            worst = std::max(worst, std::abs(s - central(c, x)) / std::max(std::abs(s), 1e-300));
            ++checks;
        }
    }
    return {worst <= 1e-6, fmt("%zu checks over 5 families, max rel err %.2e", checks, worst)};
}

// ---------------------------------------------------------------------------
// 4. Overestimation on a flattening tail

Outcome overestimation() {
    int held = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Gen g(seed);
        const double b0 = g.uniform(0.05, 0.15), b1 = g.uniform(0.5, 0.9), b2 = g.uniform(0.1, 0.2);
        const double t0 = 10.0 * static_cast<double>(20 + g.index(0, 20)) + 5.0;
        const double t1 = 10.0 * static_cast<double>(80 + g.index(0, 40)) + 5.0;
        PiecewisePowerLaw truth{{{1.0, b0}}, {t0, t1}};
        truth.pieces.push_back({eval_power(1.0, b0, t0) * std::pow(t0, b1), b1});
        truth.pieces.push_back({eval_power(truth.pieces[1].a, b1, t1) * std::pow(t1, b2), b2});
        const auto sizes = testing::grid(10, 10, static_cast<std::size_t>(6.0 * t1 / 10.0));
        const auto pts = testing::sample([&](double x) { return eval_curve(truth, x); }, sizes);
        const double xmax = static_cast<double>(sizes.back()), pool = 3.0 * xmax;
        const double true_slope = std::abs(slope(truth, xmax)), true_mse = eval_curve(truth, pool);
        bool steeper = true, under = true, exp_over = false;
        for (auto family : {CurveFamily::PowerLaw2P, CurveFamily::PowerLaw3P, CurveFamily::PowerLawExp3P}) {
            const auto f = fit_single(family, pts).curve;
            if (family == CurveFamily::PowerLawExp3P) {
                exp_over = eval_curve(f, pool) > true_mse;
            } else {
                steeper = steeper && std::abs(slope(f, xmax)) > true_slope;
                under = under && eval_curve(f, pool) < true_mse;
            }
        }
        const bool ok = steeper && under && exp_over;
        held += ok;
        per_seed += fmt("%s%s", per_seed.empty() ? "" : " ", ok ? "y" : "n");
    }
    return {held >= 4, fmt("orderings hold on %d/5 seeds [%s]", held, per_seed.c_str())};
}

// ---------------------------------------------------------------------------
// 5-7. Benchmark grid

struct Benchmark {
    GridResult grid;
    double seconds_first_five = 0.0;
    double seconds = 0.0;
};

Benchmark run_benchmark() {
    ExperimentConfig cfg;
    cfg.seeds = {0, 1, 2, 3, 4};
    Benchmark b;
    Stopwatch w;
    b.grid = simulate(cfg);
    b.seconds_first_five = w.seconds();
    cfg.seeds = {5, 6, 7, 8, 9};
    auto rest = simulate(cfg);
    b.grid.rows.insert(b.grid.rows.end(), rest.rows.begin(), rest.rows.end());
    b.seconds = w.seconds();
    return b;
}

Outcome monotone_fractions(const Benchmark& b) {
    std::map<std::pair<std::uint64_t, std::string>, std::vector<std::pair<double, double>>> by_run;
    std::size_t failed = 0, violations = 0;
    for (const auto& r : b.grid.rows) {
        if (r.status != "ok") {
            ++failed;
            continue;
        }
        by_run[{r.seed, r.method}].push_back({std::abs(r.threshold), r.final_fraction});
    }
    for (auto& [key, v] : by_run) {
        std::sort(v.begin(), v.end());
        for (std::size_t k = 1; k < v.size(); ++k)
            if (v[k].second > v[k - 1].second) ++violations;
    }
    return {violations == 0 && failed == 0,
            fmt("%zu (seed, method) runs, %zu violations, %zu failed rows", by_run.size(), violations, failed)};
}

std::vector<double> fractions(const Benchmark& b, std::string_view method, double threshold, std::size_t seeds) {
    std::vector<double> out(seeds, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : b.grid.rows)
        if (r.method == method && r.threshold == threshold && r.seed < seeds && r.status == "ok")
            out[r.seed] = r.final_fraction;
    return out;
}

Outcome oracle_closeness(const Benchmark& b) {
    const auto pw = fractions(b, "piecewise3", -2e-7, 5), oracle = fractions(b, "oracle", -2e-7, 5);
    double abs_sum = 0.0, signed_sum = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        abs_sum += std::abs(pw[k] - oracle[k]);
        signed_sum += pw[k] - oracle[k];
    }
    const double gap = abs_sum / 5.0;
    return {gap <= 0.10 && b.seconds_first_five < 900.0,
            fmt("mean |piecewise3 - oracle| %.3f (signed %+.3f); piecewise3 [%s] oracle [%s]; %.1f s", gap,
                signed_sum / 5.0, join(pw).c_str(), join(oracle).c_str(), b.seconds_first_five)};
}

Outcome naive_noise(const Benchmark& b) {
    const auto naive = fractions(b, "naive", -2e-7, 10), pw = fractions(b, "piecewise3", -2e-7, 10);
    const double vn = sample_variance(naive), vp = sample_variance(pw);
    return {vn >= vp, fmt("var naive %.4f vs piecewise3 %.4f; naive [%s] piecewise3 [%s]", vn, vp,
                          join(naive).c_str(), join(pw).c_str())};
}

// ---------------------------------------------------------------------------
// 8. Imputation and policy oracles

struct Observed {
    ObservedMatrix m;
    std::vector<CellKey> pool;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
};

Observed observe(const Eigen::MatrixXd& x) {
    std::vector<std::string> users, items;
    for (Eigen::Index i = 0; i < x.rows(); ++i) users.push_back("u" + std::to_string(i));
    for (Eigen::Index j = 0; j < x.cols(); ++j) items.push_back("i" + std::to_string(j));
    Observed o{ObservedMatrix(users, items), {}, {}};
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (testing::known(x(i, j))) {
                o.m.set(users[i], items[j], x(i, j));
            } else {
                o.pool.push_back({users[i], items[j]});
                o.cells.push_back({i, j});
            }
        }
    return o;
}

double population_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// Best q-subset by total variance over all subsets; nullopt when the
// optimum is not unique to within `gap`.
std::optional<std::set<CellKey>> best_subset(const std::vector<CellKey>& pool, const std::vector<double>& var,
                                             std::size_t q, double gap) {
    std::vector<bool> pick(pool.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(q), true);
    double best = -1.0, second = -1.0;
    std::set<CellKey> best_set;
    do {
        double total = 0.0;
        std::set<CellKey> s;
        for (std::size_t k = 0; k < pool.size(); ++k)
            if (pick[k]) total += var[k], s.insert(pool[k]);
        if (total > best) {
            second = best, best = total, best_set = std::move(s);
        } else if (total > second) {
            second = total;
        }
    } while (std::prev_permutation(pick.begin(), pick.end()));
    if (best - second < gap) return std::nullopt;
    return best_set;
}

Outcome imputation_oracles() {
    Gen g(808);
    double worst = 0.0;
    std::size_t impute_checks = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const auto rows = static_cast<Eigen::Index>(g.index(3, 5)), cols = static_cast<Eigen::Index>(g.index(2, 5));
        const auto x = testing::random_observed(g, rows, cols, 0.6);
        const auto rank = g.index(1, static_cast<std::size_t>(std::min(rows, cols)));
        const auto k = g.index(1, 3);
        worst = std::max({worst,
                          (svd_impute(x, rank, {8, 0.0}) - testing::oracle_svd_impute(x, static_cast<Eigen::Index>(rank), 8))
                              .cwiseAbs()
                              .maxCoeff(),
                          (knn_impute(x, k) - testing::oracle_knn(x, k)).cwiseAbs().maxCoeff(),
                          (em_impute(x, {5, 0.0}) - testing::oracle_em(x, 5)).cwiseAbs().maxCoeff()});
        impute_checks += 3;
    }

    std::size_t policy_checks = 0, mismatches = 0;
    const std::vector<std::size_t> ranks{1, 2};
    QbcOptions qbc;
    qbc.svd_rank = 1;
    qbc.k = 2;
    qbc.impute = {30, 0.0};
    for (int trial = 0; trial < 60 && policy_checks < 20; ++trial) {
        const auto n = static_cast<Eigen::Index>(g.index(4, 5));
        const auto x = testing::random_observed(g, n, n, 0.6);
        auto o = observe(x);
        const std::size_t q = g.index(1, 3);
        if (o.pool.size() <= q) continue;
        const bool stability = trial % 2 == 0;
        std::vector<Eigen::MatrixXd> oracles;
        if (stability) {
            for (auto r : ranks) oracles.push_back(testing::oracle_svd_impute(x, static_cast<Eigen::Index>(r), 60));
        } else {
            oracles = {testing::oracle_svd_impute(x, 1, 30), testing::oracle_knn(x, 2), testing::oracle_em(x, 30)};
        }
        std::vector<double> var;
        for (auto [i, j] : o.cells) {
            std::vector<double> preds;
            for (const auto& c : oracles) preds.push_back(c(i, j));
            var.push_back(population_variance(preds));
        }
        const auto want = best_subset(o.pool, var, q, 1e-4);
        if (!want) continue;  // near-tied fixture
        const auto batch = stability ? stability_policy(o.m, o.pool, q, ranks, 1, {60, 0.0})
                                     : qbc_policy(o.m, o.pool, q, 1, qbc);
        const std::set<CellKey> got(batch.pairs.begin(), batch.pairs.end());
        ++policy_checks;
        if (got != *want) ++mismatches;
    }
    return {worst <= 1e-6 && mismatches == 0 && policy_checks >= 10,
            fmt("%zu imputations, max abs err %.2e; %zu policy selections, %zu mismatches", impute_checks, worst,
                policy_checks, mismatches)};
}

// ---------------------------------------------------------------------------
// 9. Burden concentration

Outcome burden_concentration() {
    auto mean_gini = [](PolicyKind kind, std::vector<double>& out, std::size_t& failed) {
        ExperimentConfig cfg;
        cfg.policy.kind = kind;
        for (const auto& cell : user_report(cfg)) {
            if (cell.failure) {
                ++failed;
                continue;
            }
            out.push_back(cell.report.burden_gini);
        }
        return out.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(out);
    };
    Stopwatch w;
    std::vector<double> stab, rand;
    std::size_t failed = 0;
    const double gs = mean_gini(PolicyKind::Stability, stab, failed);
    const double gr = mean_gini(PolicyKind::Random, rand, failed);
    return {failed == 0 && gs > gr, fmt("mean Gini stability %.3f [%s] vs random %.3f [%s]; %zu failed; %.0f s", gs,
                                        join(stab).c_str(), gr, join(rand).c_str(), failed, w.seconds())};
}

// ---------------------------------------------------------------------------
// 10. CLI determinism

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

std::map<std::string, std::string> data_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "metadata.json") continue;
        out[fs::relative(e.path(), dir).string()] = testing::read_file(e.path());
    }
    return out;
}

Outcome cli_determinism() {
    const testing::TempDir dir("acceptance");
    const std::string bin = quoted(DATAMIN_BIN);
    const std::string tiny =
        " --corpus-users 30 --corpus-items 30 --corpus-density 0.6 --corpus-scale 0.5 --rank 4 --epochs 8"
        " --learning-rate 0.01";
    auto run = [&](const std::string& args) {
        const std::string cmd = bin + " " + args + " >" + quoted(dir / "stdout") + " 2>" + quoted(dir / "stderr");
        return std::system(cmd.c_str()) == 0;
    };
    if (!run("synth --kind curve --out " + quoted(dir / "curve"))) return {false, "could not synthesize curve input"};
    const std::vector<std::pair<std::string, std::string>> commands{
        {"splits", "splits --seed 3" + tiny},
        {"fit", "fit --family piecewise3 --points " + quoted(dir / "curve" / "points.csv")},
        {"simulate", "simulate --seed 0 --threshold -2e-4" + tiny},
        {"sweep-q", "sweep-q --q-list 0.02 0.05 --seed 0 --threshold -2e-4 --family piecewise3 oracle" + tiny},
        {"user-report", "user-report --seed 0 --policy random --at-threshold -1e-3" + tiny},
        {"synth ratings", "synth --seed 4" + tiny},
        {"synth curve", "synth --kind curve --noise 0.01 --seed 2"},
    };
    std::string differing;
    std::size_t compared = 0;
    for (std::size_t k = 0; k < commands.size(); ++k) {
        const auto a = dir / ("run" + std::to_string(k) + "a"), b = dir / ("run" + std::to_string(k) + "b");
        const bool ok = run(commands[k].second + " --out " + quoted(a)) && run(commands[k].second + " --out " + quoted(b));
        const auto fa = ok ? data_files(a) : std::map<std::string, std::string>{};
        if (!ok || fa.empty() || fa != data_files(b)) {
            differing += (differing.empty() ? "" : ", ") + commands[k].first;
        } else {
            compared += fa.size();
        }
    }
    return {differing.empty(), fmt("%zu commands, %zu data files identical%s%s", commands.size(), compared,
                                   differing.empty() ? "" : "; differing or failed: ", differing.c_str())};
}

}  // namespace
}  // namespace datamin

int main(int argc, char** argv) {
    using namespace datamin;
    CLI::App app{"Acceptance criteria; one PASS/FAIL line each"};
    std::vector<int> only;
    app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    const std::vector<std::pair<const char*, std::function<Outcome()>>> simple{
        {"curve recovery", curve_recovery},
        {"exhaustive-scan equivalence", exhaustive_scan},
        {"slope correctness", slope_correctness},
        {"overestimation on a flattening tail", overestimation},
    };
    int failures = 0;
    auto report = [&](int n, const char* name, const Outcome& o) {
        std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto guarded = [](const std::function<Outcome()>& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("error: ") + e.what()};
        }
    };
    for (int n = 1; n <= 4; ++n)
        if (wanted(n)) report(n, simple[n - 1].first, guarded(simple[n - 1].second));
    if (wanted(5) || wanted(6) || wanted(7)) {
        std::optional<Benchmark> bench;
        std::string error;
        try {
            bench = run_benchmark();
        } catch (const std::exception& e) {
            error = e.what();
        }
        auto with = [&](Outcome (*f)(const Benchmark&)) {
            return bench ? guarded([&] { return f(*bench); }) : Outcome{false, "error: " + error};
        };
        if (wanted(5)) report(5, "stopping-fraction monotonicity", with(monotone_fractions));
        if (wanted(6)) report(6, "piecewise vs oracle closeness", with(oracle_closeness));
        if (wanted(7)) report(7, "naive noisiness", with(naive_noise));
    }
    if (wanted(8)) report(8, "imputation and policy oracles", guarded(imputation_oracles));
    if (wanted(9)) report(9, "burden concentration", guarded(burden_concentration));
    if (wanted(10)) report(10, "CLI determinism", guarded(cli_determinism));
    return failures == 0 ? 0 : 1;
}
