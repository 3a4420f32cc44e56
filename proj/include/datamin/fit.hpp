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

// Curve fitting: single parametric families and the K-piece power law whose
// changepoints are chosen so that adjacent decay exponents differ the most.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "datamin/curves.hpp"
#include "datamin/error.hpp"
#include "datamin/nls.hpp"

namespace datamin {

struct FitReport {
    Curve curve;
    double weighted_sse = 0.0;
    std::vector<double> objective_trace;  // piecewise fits only
    std::size_t iterations = 0;
    bool converged = false;
};

inline constexpr double kMinCoefficient = 1e-12;

inline std::size_t param_count(CurveFamily f) {
    switch (f) {
        case CurveFamily::PowerLaw2P: return 2;
        case CurveFamily::PowerLaw3P:
        case CurveFamily::PowerLawExp3P: return 3;
        case CurveFamily::Piecewise2: return 4;
        case CurveFamily::Piecewise3: return 6;
    }
    return 0;
}

namespace detail {

// Ordinary least squares of log(y - shift) on the given log-space features.
// Points with y - shift <= 0 are dropped. Returns false if the system is
// underdetermined.
template <int Cols, class Features>
bool log_regression(std::span<const PerformancePoint> points, double shift, Features features,
                    Eigen::Matrix<double, Cols, 1>& coef) {
    std::vector<std::pair<Eigen::Matrix<double, Cols, 1>, double>> rows;
    for (const auto& p : points) {
        const double y = p.value - shift;
        if (!(y > 0.0)) continue;
        rows.emplace_back(features(std::log(static_cast<double>(p.size)), static_cast<double>(p.size)),
                          std::log(y));
    }
    if (rows.size() < static_cast<std::size_t>(Cols)) return false;
    Eigen::MatrixXd a(rows.size(), Cols);
    Eigen::VectorXd b(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        a.row(static_cast<Eigen::Index>(r)) = rows[r].first.transpose();
        b(static_cast<Eigen::Index>(r)) = rows[r].second;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    if (cod.rank() < Cols) return false;
    coef = cod.solve(b);
    return coef.allFinite();
}

inline std::pair<double, double> value_range(std::span<const PerformancePoint> points) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : points) {
        lo = std::min(lo, p.value);
        hi = std::max(hi, p.value);
    }
    return {lo, hi};
}

inline double mean_value(std::span<const PerformancePoint> points) {
    double s = 0.0;
    for (const auto& p : points) s += p.value;
    return s / static_cast<double>(points.size());
}

inline bool is_flat(std::span<const PerformancePoint> points) {
    auto [lo, hi] = value_range(points);
    return hi - lo <= 1e-12 * std::max(1.0, std::abs(hi));
}

// Intercept a and exponent b of log y = log a - b log x.
inline Params<2> power_law_guess(std::span<const PerformancePoint> points, double shift) {
    Eigen::Vector2d coef;
    auto features = [](double lx, double) { return Eigen::Vector2d(1.0, lx); };
    if (log_regression<2>(points, shift, features, coef))
        return {std::max(std::exp(coef(0)), kMinCoefficient), -coef(1)};
    return {std::max(mean_value(points) - shift, kMinCoefficient), 0.0};
}

inline double floor_guess(std::span<const PerformancePoint> points) {
    auto [lo, hi] = value_range(points);
    double c0 = 0.9 * lo;
    if (!(lo - c0 > 0.0)) c0 = lo - 0.1 * std::max({hi - lo, std::abs(lo), 1e-12});
    return c0;
}

inline FitReport fit_power_law_2p(std::span<const PerformancePoint> points) {
    const std::array<ParamBounds, 2> bounds{ParamBounds{kMinCoefficient}, ParamBounds{}};
    auto r = weighted_nls<PowerLaw2PModel>(points, power_law_guess(points, 0.0), bounds);
    return {PowerLaw2P{r.params[0], r.params[1]}, r.weighted_sse, {}, r.iterations, r.converged};
}

inline FitReport fit_power_law_3p(std::span<const PerformancePoint> points) {
    Params<3> init;
    if (is_flat(points)) {
        init = {kMinCoefficient, 0.0, mean_value(points)};
    } else {
        const double c0 = floor_guess(points);
        auto [a, b] = power_law_guess(points, c0);
        init = {a, b, c0};
    }
    const std::array<ParamBounds, 3> bounds{ParamBounds{kMinCoefficient}, ParamBounds{}, ParamBounds{}};
    auto r = weighted_nls<PowerLaw3PModel>(points, init, bounds);
    return {PowerLaw3P{r.params[0], r.params[1], r.params[2]}, r.weighted_sse, {}, r.iterations,
            r.converged};
}

// Exponent a of log(y - c) - b x = a log x for fixed b and c.
inline std::optional<double> cutoff_exponent(std::span<const PerformancePoint> points, double b, double c) {
    double num = 0.0, den = 0.0;
    for (const auto& p : points) {
        if (!(p.value - c > 0.0)) continue;
        const double x = static_cast<double>(p.size), lx = std::log(x);
        num += lx * (std::log(p.value - c) - b * x);
        den += lx * lx;
    }
    if (!(den > 0.0)) return std::nullopt;
    return num / den;
}

inline FitReport fit_power_law_exp_3p(std::span<const PerformancePoint> points) {
    const std::array<ParamBounds, 3> bounds{ParamBounds{}, ParamBounds{-ParamBounds{}.hi, 0.0},
                                            ParamBounds{0.0}};
    const double lo = value_range(points).first;
    const double xmax = static_cast<double>(points.back().size);
    std::optional<NlsResult<3>> best;
    auto attempt = [&](const Params<3>& init) {
        auto r = weighted_nls<PowerLawExp3PModel>(points, init, bounds);
        if (!best || r.weighted_sse < best->weighted_sse) best = std::move(r);
    };
    for (double frac : {0.0, 0.5, 0.8, 0.9, 0.95, 0.99}) {
        const double c0 = std::max(frac * lo, 0.0);
        // log(y - c) = a log x + b x
        Eigen::Vector2d coef;
        auto features = [](double lx, double x) { return Eigen::Vector2d(lx, x); };
        if (log_regression<2>(points, c0, features, coef)) attempt({coef(0), std::min(coef(1), 0.0), c0});
        for (double k : {0.0, 0.3, 1.0, 3.0}) {
            const double b0 = -k / xmax;
            if (auto a0 = cutoff_exponent(points, b0, c0)) attempt({*a0, b0, c0});
        }
    }
    if (!best) attempt({0.0, 0.0, 0.0});
    const auto& r = *best;
    return {PowerLawExp3P{r.params[0], r.params[1], r.params[2]}, r.weighted_sse, {}, r.iterations,
            r.converged};
}

}  // namespace detail

/// Fits one of the single-curve families. The starting point comes from a
/// log-space linear regression of y - c0, with c0 = 0 for the two-parameter
/// law and 0.9 * min(y) for the three-parameter law. The exponential-cutoff
/// law starts from a grid of floors in [0, min(y)) and cutoff rates and keeps
/// the lowest SSE.
inline FitReport fit_single(CurveFamily family, std::span<const PerformancePoint> points) {
    switch (family) {
        case CurveFamily::PowerLaw2P: return detail::fit_power_law_2p(points);
        case CurveFamily::PowerLaw3P: return detail::fit_power_law_3p(points);
        case CurveFamily::PowerLawExp3P: return detail::fit_power_law_exp_3p(points);
        default: throw FitError("fit_single expects a single-curve family");
    }
}

namespace detail {

// Two-parameter fits of contiguous index ranges [begin, end), memoized.
class SegmentFitter {
public:
    explicit SegmentFitter(std::span<const PerformancePoint> points) : points_(points) {}

    const FitReport& fit(std::size_t begin, std::size_t end) {
        auto key = std::make_pair(begin, end);
        auto it = cache_.find(key);
        if (it == cache_.end())
            it = cache_.emplace(key, fit_power_law_2p(points_.subspan(begin, end - begin))).first;
        return it->second;
    }

    double exponent(std::size_t begin, std::size_t end) {
        return std::get<PowerLaw2P>(fit(begin, end).curve).b;
    }

private:
    std::span<const PerformancePoint> points_;
    std::map<std::pair<std::size_t, std::size_t>, FitReport> cache_;
};

}  // namespace detail

/// |b_0 - b_1| + |b_1 - b_2| (or |b_0 - b_1| for two pieces), the quantity
/// recorded in FitReport::objective_trace.
inline double piecewise_objective(const PiecewisePowerLaw& c) {
    double s = 0.0;
    for (std::size_t i = 1; i < c.pieces.size(); ++i) s += std::abs(c.pieces[i - 1].b - c.pieces[i].b);
    return s;
}

struct PiecewiseOptions {
    std::size_t min_points = 3;
    std::size_t max_iterations = 50;
};

/// Piecewise power law with K in {2, 3} pieces. Changepoints live on the grid
/// of observed sizes: a changepoint at points[j].size closes its piece at
/// index j. For K = 2 the single changepoint is a full scan maximizing
/// |b_0 - b_1|. For K = 3 coordinate descent alternates a scan of t_0
/// maximizing |b_0 - b_1| with a scan of t_1 maximizing |b_1 - b_2| until
/// neither moves; an iteration that lowers the combined objective is undone
/// and ends the search. The alternation runs from several starting values of
/// t_1 and the best end state is then refined by coordinate ascent on the
/// combined objective. Ties go to the smallest changepoint.
inline FitReport fit_piecewise(std::span<const PerformancePoint> points, std::size_t pieces,
                               PiecewiseOptions opts = {}) {
    if (pieces != 2 && pieces != 3) throw FitError("piecewise fits support 2 or 3 pieces");
    if (opts.min_points < 2) throw FitError("each piece needs at least 2 points");
    const std::size_t n = points.size();
    if (n < pieces * opts.min_points)
        throw FitError("need at least " + std::to_string(pieces * opts.min_points) + " points for " +
                       std::to_string(pieces) + " pieces, got " + std::to_string(n));
    for (std::size_t i = 1; i < n; ++i)
        if (!(points[i - 1].size < points[i].size))
            throw FitError("points must be sorted by strictly increasing size");

    const std::size_t mp = opts.min_points;
    detail::SegmentFitter seg(points);
    FitReport report;

    // j is the last index of its piece.
    auto scan = [&](std::size_t lo_begin, std::size_t j_min, std::size_t j_max, std::size_t hi_end) {
        std::size_t best = j_min;
        double best_obj = -1.0;
        for (std::size_t j = j_min; j <= j_max; ++j) {
            const double obj = std::abs(seg.exponent(lo_begin, j + 1) - seg.exponent(j + 1, hi_end));
            if (obj > best_obj) {
                best_obj = obj;
                best = j;
            }
        }
        return best;
    };

    std::vector<std::size_t> ends;  // index of the last point of every piece but the final one
    if (pieces == 2) {
        ends = {scan(0, mp - 1, n - 1 - mp, n)};
        report.iterations = 1;
        report.converged = true;
    } else {
        auto objective = [&](std::size_t a, std::size_t b) {
            const double b0 = seg.exponent(0, a + 1), b1 = seg.exponent(a + 1, b + 1),
                         b2 = seg.exponent(b + 1, n);
            return std::abs(b0 - b1) + std::abs(b1 - b2);
        };
        struct Path {
            std::size_t j0, j1, iterations = 0;
            bool converged = false;
            std::vector<double> trace;
        };
        auto alternate = [&](std::size_t j1) {
            Path path{mp - 1, j1, 0, false, {}};
            path.trace.push_back(objective(path.j0, path.j1));
            while (path.iterations < opts.max_iterations) {
                ++path.iterations;
                const std::size_t nj0 = scan(0, mp - 1, path.j1 - mp, path.j1 + 1);
                const std::size_t nj1 = scan(nj0 + 1, nj0 + mp, n - 1 - mp, n);
                const double obj = objective(nj0, nj1);
                if (obj < path.trace.back()) {
                    path.converged = true;
                    break;
                }
                path.trace.push_back(obj);
                const bool moved = nj0 != path.j0 || nj1 != path.j1;
                path.j0 = nj0;
                path.j1 = nj1;
                if (!moved) {
                    path.converged = true;
                    break;
                }
            }
            return path;
        };

        constexpr std::size_t kStarts = 5;
        std::optional<Path> best;
        std::size_t last_start = 0;
        for (std::size_t s = 1; s <= kStarts; ++s) {
            const std::size_t j1 = std::clamp(n * s / (kStarts + 1) + mp, 2 * mp, n - mp) - 1;
            if (best && j1 == last_start) continue;
            last_start = j1;
            Path path = alternate(j1);
            if (!best || path.trace.back() > best->trace.back()) best = std::move(path);
        }

        // Refinement: each scan holds one changepoint fixed and maximizes the
        // combined objective over the other, so the trace cannot decrease.
        Path& p = *best;
        while (p.iterations < opts.max_iterations) {
            ++p.iterations;
            std::size_t nj0 = p.j0, nj1 = p.j1;
            double obj = p.trace.back();
            for (std::size_t j = mp - 1; j + mp <= p.j1; ++j)
                if (const double o = objective(j, p.j1); o > obj) obj = o, nj0 = j;
            for (std::size_t k = nj0 + mp; k + mp < n; ++k)
                if (const double o = objective(nj0, k); o > obj) obj = o, nj1 = k;
            const bool moved = nj0 != p.j0 || nj1 != p.j1;
            if (!moved) break;
            p.j0 = nj0;
            p.j1 = nj1;
            p.trace.push_back(obj);
        }
        report.iterations = p.iterations;
        report.converged = p.converged;
        report.objective_trace = std::move(p.trace);
        ends = {p.j0, p.j1};
    }

    PiecewisePowerLaw curve;
    std::size_t begin = 0;
    bool segments_converged = true;
    for (std::size_t s = 0; s <= ends.size(); ++s) {
        const std::size_t end = s < ends.size() ? ends[s] + 1 : n;
        const auto& f = seg.fit(begin, end);
        const auto& pl = std::get<PowerLaw2P>(f.curve);
        curve.pieces.push_back({pl.a, pl.b});
        report.weighted_sse += f.weighted_sse;
        segments_converged = segments_converged && f.converged;
        if (s < ends.size()) curve.changepoints.push_back(static_cast<double>(points[ends[s]].size));
        begin = end;
    }
    if (pieces == 2) report.objective_trace.push_back(piecewise_objective(curve));
    report.converged = report.converged && segments_converged;
    report.curve = std::move(curve);
    return report;
}

/// Dispatches on family.
inline FitReport fit_curve(CurveFamily family, std::span<const PerformancePoint> points,
                           PiecewiseOptions opts = {}) {
    if (is_piecewise(family)) return fit_piecewise(points, piece_count(family), opts);
    return fit_single(family, points);
}

}  // namespace datamin
