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

// Shared helpers for the test suites: seeded generators, brute-force oracles
// and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "datamin/curves.hpp"
#include "datamin/random.hpp"

namespace datamin::testing {

// ---------------------------------------------------------------------------
// Generators

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
    std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
    Rng& rng() { return rng_; }

private:
    Rng rng_;
};

/// Arithmetic grid start, start + step, ...
inline std::vector<std::size_t> grid(std::size_t start, std::size_t step, std::size_t count) {
    std::vector<std::size_t> g(count);
    for (std::size_t k = 0; k < count; ++k) g[k] = start + k * step;
    return g;
}

template <class F>
std::vector<PerformancePoint> sample(F&& f, const std::vector<std::size_t>& sizes) {
    std::vector<PerformancePoint> out;
    for (auto s : sizes) out.push_back({s, f(static_cast<double>(s))});
    return out;
}

/// A continuous decreasing piecewise curve whose changepoints fall on the
/// grid, with exponents at least 0.15 apart.
struct PiecewiseFixture {
    PiecewisePowerLaw curve;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> changepoint_index;  // index of the last point of each closed piece
};

/// Continuous pieces. A nonzero kink_offset (in grid steps, below 1) moves each
/// kink off the grid; the closing index still names the last size below it.
inline PiecewiseFixture random_piecewise(Gen& g, std::size_t pieces, std::size_t n, std::size_t min_points = 3,
                                         double kink_offset = 0.0) {
    PiecewiseFixture fx;
    const std::size_t step = g.index(5, 30);
    fx.sizes = grid(g.index(10, 50), step, n);
    std::vector<double> bs;
    for (std::size_t k = 0; k < pieces; ++k) {
        double b;
        do {
            b = g.uniform(0.02, 1.2);
        } while (std::any_of(bs.begin(), bs.end(), [&](double o) { return std::abs(o - b) < 0.15; }));
        bs.push_back(b);
    }
    std::size_t lo = min_points - 1;
    for (std::size_t k = 0; k + 1 < pieces; ++k) {
        const std::size_t remaining = pieces - 1 - k;
        const std::size_t hi = n - 1 - remaining * min_points;
        const std::size_t span = (hi - lo) / remaining;
        const std::size_t j = g.index(lo, lo + span);
        fx.changepoint_index.push_back(j);
        lo = j + min_points;
    }
    double a = g.log_uniform(0.5, 20.0);
    fx.curve.pieces.push_back({a, bs[0]});
    for (std::size_t k = 0; k + 1 < pieces; ++k) {
        const double t = static_cast<double>(fx.sizes[fx.changepoint_index[k]]) + kink_offset * static_cast<double>(step);
        fx.curve.changepoints.push_back(t);
        const double y = fx.curve.pieces.back().a * std::pow(t, -fx.curve.pieces.back().b);
        fx.curve.pieces.push_back({y * std::pow(t, bs[k + 1]), bs[k + 1]});
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Independent two-parameter fitter

/// Weighted least squares of y ~ a x^-b with weights 1/sqrt(x), by profiling:
/// for fixed b the optimal a is linear, and b is found by a coarse scan
/// followed by golden-section refinement.
struct ProfileFit {
    double a = 0.0, b = 0.0, sse = 0.0;
};

inline ProfileFit profile_fit(const std::vector<PerformancePoint>& pts, double b_lo = -3.0, double b_hi = 5.0) {
    auto eval = [&](double b) {
        double num = 0.0, den = 0.0;
        for (const auto& p : pts) {
            const double x = static_cast<double>(p.size), w = 1.0 / std::sqrt(x), f = std::pow(x, -b);
            num += w * p.value * f;
            den += w * f * f;
        }
        const double a = std::max(num / den, 1e-12);
        double sse = 0.0;
        for (const auto& p : pts) {
            const double x = static_cast<double>(p.size), r = a * std::pow(x, -b) - p.value;
            sse += r * r / std::sqrt(x);
        }
        return ProfileFit{a, b, sse};
    };
    const int coarse = 400;
    double best_b = b_lo, best = eval(b_lo).sse;
    for (int k = 1; k <= coarse; ++k) {
        const double b = b_lo + (b_hi - b_lo) * k / coarse;
        const double s = eval(b).sse;
        if (s < best) best = s, best_b = b;
    }
    const double h = (b_hi - b_lo) / coarse;
    double lo = best_b - h, hi = best_b + h;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    double fc = eval(c).sse, fd = eval(d).sse;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        if (fc < fd) {
            hi = d, d = c, fd = fc;
            c = hi - phi * (hi - lo), fc = eval(c).sse;
        } else {
            lo = c, c = d, fc = fd;
            d = lo + phi * (hi - lo), fd = eval(d).sse;
        }
    }
    return eval(0.5 * (lo + hi));
}

/// Exhaustive search over all (t0, t1) index pairs maximizing
/// |b0 - b1| + |b1 - b2| with independent segment fits.
struct DoubleScan {
    std::size_t j0 = 0, j1 = 0;
    double objective = -1.0;
};

inline DoubleScan exhaustive_double_scan(const std::vector<PerformancePoint>& pts, std::size_t min_points) {
    const std::size_t n = pts.size();
    std::map<std::pair<std::size_t, std::size_t>, double> memo;
    auto b_of = [&](std::size_t begin, std::size_t end) {
        auto key = std::make_pair(begin, end);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::vector<PerformancePoint> seg(pts.begin() + static_cast<std::ptrdiff_t>(begin),
                                          pts.begin() + static_cast<std::ptrdiff_t>(end));
        return memo[key] = profile_fit(seg).b;
    };
    DoubleScan best;
    for (std::size_t j0 = min_points - 1; j0 + 2 * min_points < n; ++j0)
        for (std::size_t j1 = j0 + min_points; j1 + min_points < n; ++j1) {
            const double b0 = b_of(0, j0 + 1), b1 = b_of(j0 + 1, j1 + 1), b2 = b_of(j1 + 1, n);
            const double obj = std::abs(b0 - b1) + std::abs(b1 - b2);
            if (obj > best.objective) best = {j0, j1, obj};
        }
    return best;
}

// ---------------------------------------------------------------------------
// Files

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("datamin-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace datamin::testing
