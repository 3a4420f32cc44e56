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

// Weighted nonlinear least squares by damped Gauss-Newton (Levenberg-Marquardt)
// for small curve models. Minimizes sum_n w_n (f(x_n; theta) - y_n)^2 with
// w_n = 1/sqrt(x_n) unless explicit weights are supplied.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "datamin/curves.hpp"
#include "datamin/error.hpp"

namespace datamin {

template <std::size_t N>
using Params = std::array<double, N>;

struct ParamBounds {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    double clamp(double v) const { return std::min(std::max(v, lo), hi); }
};

template <class M>
concept CurveModel = requires(double x, const Params<M::kParams>& p) {
    { M::value(x, p) } -> std::convertible_to<double>;
};

template <class M>
concept AnalyticCurveModel = CurveModel<M> && requires(double x, const Params<M::kParams>& p) {
    { M::gradient(x, p) } -> std::same_as<Params<M::kParams>>;
};

/// a * x^(-b)
struct PowerLaw2PModel {
    static constexpr std::size_t kParams = 2;
    static double value(double x, const Params<2>& p) { return p[0] * std::pow(x, -p[1]); }
    static Params<2> gradient(double x, const Params<2>& p) {
        const double xb = std::pow(x, -p[1]);
        return {xb, -p[0] * xb * std::log(x)};
    }
};

/// a * x^(-b) + c
struct PowerLaw3PModel {
    static constexpr std::size_t kParams = 3;
    static double value(double x, const Params<3>& p) { return p[0] * std::pow(x, -p[1]) + p[2]; }
    static Params<3> gradient(double x, const Params<3>& p) {
        const double xb = std::pow(x, -p[1]);
        return {xb, -p[0] * xb * std::log(x), 1.0};
    }
};

/// x^a * exp(b x) + c
struct PowerLawExp3PModel {
    static constexpr std::size_t kParams = 3;
    static double value(double x, const Params<3>& p) {
        return std::pow(x, p[0]) * std::exp(p[1] * x) + p[2];
    }
    static Params<3> gradient(double x, const Params<3>& p) {
        const double g = std::pow(x, p[0]) * std::exp(p[1] * x);
        return {g * std::log(x), g * x, 1.0};
    }
};

struct NlsOptions {
    std::size_t max_iterations = 500;
    double step_tolerance = 1e-10;
    double initial_damping = 1e-3;
};

template <std::size_t N>
struct NlsResult {
    Params<N> params{};
    double weighted_sse = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

inline std::vector<double> inverse_sqrt_size_weights(std::span<const PerformancePoint> points) {
    std::vector<double> w(points.size());
    for (std::size_t n = 0; n < points.size(); ++n)
        w[n] = 1.0 / std::sqrt(static_cast<double>(points[n].size));
    return w;
}

template <CurveModel M>
double weighted_sse(std::span<const PerformancePoint> points, const Params<M::kParams>& p,
                    std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t n = 0; n < points.size(); ++n) {
        const double r = M::value(static_cast<double>(points[n].size), p) - points[n].value;
        s += weights[n] * r * r;
    }
    return s;
}

namespace detail {

template <CurveModel M>
Params<M::kParams> jacobian_row(double x, const Params<M::kParams>& p) {
    if constexpr (AnalyticCurveModel<M>) {
        return M::gradient(x, p);
    } else {
        Params<M::kParams> g{};
        for (std::size_t j = 0; j < M::kParams; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(p[j]));
            auto hi = p, lo = p;
            hi[j] += h;
            lo[j] -= h;
            g[j] = (M::value(x, hi) - M::value(x, lo)) / (2.0 * h);
        }
        return g;
    }
}

}  // namespace detail

/// Levenberg-Marquardt with multiplicative damping (x10 on a rejected step,
/// /10 on an accepted one) and projection onto the box bounds. Stops when a
/// step is shorter than step_tolerance (relative to |theta|) or after
/// max_iterations; in the latter case the best iterate is returned with
/// converged = false.
template <CurveModel M>
NlsResult<M::kParams> weighted_nls(std::span<const PerformancePoint> points,
                                   Params<M::kParams> init,
                                   const std::array<ParamBounds, M::kParams>& bounds,
                                   std::span<const double> weights = {}, NlsOptions opts = {}) {
    constexpr std::size_t N = M::kParams;
    using Mat = Eigen::Matrix<double, static_cast<int>(N), static_cast<int>(N)>;
    using Vec = Eigen::Matrix<double, static_cast<int>(N), 1>;

    if (points.size() < N)
        throw FitError("need at least " + std::to_string(N) + " points, got " +
                       std::to_string(points.size()));
    {
        std::vector<std::size_t> sizes;
        for (const auto& pt : points) sizes.push_back(pt.size);
        std::sort(sizes.begin(), sizes.end());
        if (std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end())
            throw FitError("sample sizes must be distinct");
        if (sizes.front() == 0) throw FitError("sample sizes must be positive");
    }
    std::vector<double> owned;
    if (weights.empty()) {
        owned = inverse_sqrt_size_weights(points);
        weights = owned;
    }
    if (weights.size() != points.size()) throw FitError("one weight per point required");

    NlsResult<N> res;
    for (std::size_t j = 0; j < N; ++j) res.params[j] = bounds[j].clamp(init[j]);
    res.weighted_sse = weighted_sse<M>(points, res.params, weights);
    if (!std::isfinite(res.weighted_sse)) throw FitError("initial guess gives a non-finite residual");

    double lambda = opts.initial_damping;
    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        if (res.weighted_sse == 0.0) {
            res.converged = true;
            return res;
        }
        Mat jtj = Mat::Zero();
        Vec jtr = Vec::Zero();
        for (std::size_t n = 0; n < points.size(); ++n) {
            const double x = static_cast<double>(points[n].size);
            const auto g = detail::jacobian_row<M>(x, res.params);
            const double r = M::value(x, res.params) - points[n].value;
            for (std::size_t a = 0; a < N; ++a) {
                jtr(a) += weights[n] * g[a] * r;
                for (std::size_t b = 0; b < N; ++b) jtj(a, b) += weights[n] * g[a] * g[b];
            }
        }
        double diag_max = 0.0;
        for (std::size_t a = 0; a < N; ++a) diag_max = std::max(diag_max, jtj(a, a));
        if (!(diag_max > 0.0) || !jtj.allFinite() || !jtr.allFinite()) break;

        // Inner loop: raise damping until a step lowers the objective.
        bool accepted = false;
        while (!accepted) {
            Mat lhs = jtj;
            for (std::size_t a = 0; a < N; ++a)
                lhs(a, a) += lambda * std::max(jtj(a, a), 1e-12 * diag_max);
            Vec delta = lhs.ldlt().solve(-jtr);
            Params<N> trial;
            double step_sq = 0.0, theta_sq = 0.0;
            for (std::size_t a = 0; a < N; ++a) {
                const double d = std::isfinite(delta(a)) ? delta(a) : 0.0;
                trial[a] = bounds[a].clamp(res.params[a] + d);
                step_sq += (trial[a] - res.params[a]) * (trial[a] - res.params[a]);
                theta_sq += res.params[a] * res.params[a];
            }
            const bool tiny = std::sqrt(step_sq) <= opts.step_tolerance * (std::sqrt(theta_sq) + opts.step_tolerance);
            const double trial_sse = weighted_sse<M>(points, trial, weights);
            if (std::isfinite(trial_sse) && trial_sse < res.weighted_sse) {
                res.params = trial;
                res.weighted_sse = trial_sse;
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
                if (tiny) {
                    res.converged = true;
                    ++res.iterations;
                    return res;
                }
            } else {
                if (tiny || lambda > 1e20) {
                    // No descent direction left at machine precision.
                    res.converged = true;
                    ++res.iterations;
                    return res;
                }
                lambda *= 10.0;
            }
        }
    }
    return res;
}

}  // namespace datamin
