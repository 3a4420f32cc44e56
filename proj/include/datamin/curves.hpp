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

// Performance-curve families and their closed-form evaluation.
//
// Every power-law piece is stored as a * x^(-b): b > 0 means the metric
// decreases with more data. Piecewise curves select their active piece with
// the lower-closed convention: x <= t_0 -> piece 0, t_0 < x <= t_1 -> piece 1,
// and so on; x past the last changepoint uses the last piece.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "datamin/error.hpp"

namespace datamin {

/// (training-set size, validation metric) pair.
struct PerformancePoint {
    std::size_t size = 0;
    double value = 0.0;

    friend bool operator==(const PerformancePoint&, const PerformancePoint&) = default;
};

struct PowerLaw2P {
    double a = 1.0;
    double b = 0.0;
};

struct PowerLaw3P {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;  // irreducible-error floor
};

/// x^a * exp(b * x) + c
struct PowerLawExp3P {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

struct PowerLawPiece {
    double a = 1.0;
    double b = 0.0;
};

struct PiecewisePowerLaw {
    std::vector<PowerLawPiece> pieces;
    std::vector<double> changepoints;  // strictly increasing, size == pieces.size() - 1

    std::size_t piece_index(double x) const {
        // first changepoint >= x; a point on a changepoint belongs to the lower piece
        auto it = std::lower_bound(changepoints.begin(), changepoints.end(), x);
        return static_cast<std::size_t>(it - changepoints.begin());
    }
};

using Curve = std::variant<PowerLaw2P, PowerLaw3P, PowerLawExp3P, PiecewisePowerLaw>;

enum class CurveFamily { PowerLaw2P, PowerLaw3P, PowerLawExp3P, Piecewise2, Piecewise3 };

inline std::string_view to_string(CurveFamily f) {
    switch (f) {
        case CurveFamily::PowerLaw2P: return "2p-pl";
        case CurveFamily::PowerLaw3P: return "3p-pl";
        case CurveFamily::PowerLawExp3P: return "3p-pl-exp";
        case CurveFamily::Piecewise2: return "piecewise2";
        case CurveFamily::Piecewise3: return "piecewise3";
    }
    return "?";
}

inline std::optional<CurveFamily> parse_curve_family(std::string_view s) {
    for (auto f : {CurveFamily::PowerLaw2P, CurveFamily::PowerLaw3P, CurveFamily::PowerLawExp3P,
                   CurveFamily::Piecewise2, CurveFamily::Piecewise3}) {
        if (to_string(f) == s) return f;
    }
    return std::nullopt;
}

inline bool is_piecewise(CurveFamily f) {
    return f == CurveFamily::Piecewise2 || f == CurveFamily::Piecewise3;
}

inline std::size_t piece_count(CurveFamily f) {
    return f == CurveFamily::Piecewise3 ? 3 : 2;
}

inline CurveFamily family_of(const Curve& c) {
    struct V {
        CurveFamily operator()(const PowerLaw2P&) const { return CurveFamily::PowerLaw2P; }
        CurveFamily operator()(const PowerLaw3P&) const { return CurveFamily::PowerLaw3P; }
        CurveFamily operator()(const PowerLawExp3P&) const { return CurveFamily::PowerLawExp3P; }
        CurveFamily operator()(const PiecewisePowerLaw& p) const {
            return p.pieces.size() == 3 ? CurveFamily::Piecewise3 : CurveFamily::Piecewise2;
        }
    };
    return std::visit(V{}, c);
}

inline double eval_power(double a, double b, double x) { return a * std::pow(x, -b); }

inline double slope_power(double a, double b, double x) { return -b * a * std::pow(x, -b - 1.0); }

inline double eval_curve(const PowerLaw2P& c, double x) { return eval_power(c.a, c.b, x); }
inline double eval_curve(const PowerLaw3P& c, double x) { return eval_power(c.a, c.b, x) + c.c; }
inline double eval_curve(const PowerLawExp3P& c, double x) {
    return std::pow(x, c.a) * std::exp(c.b * x) + c.c;
}
inline double eval_curve(const PiecewisePowerLaw& c, double x) {
    if (c.pieces.empty()) throw Error("piecewise curve has no pieces");
    const auto& p = c.pieces[std::min(c.piece_index(x), c.pieces.size() - 1)];
    return eval_power(p.a, p.b, x);
}
inline double eval_curve(const Curve& c, double x) {
    return std::visit([x](const auto& v) { return eval_curve(v, x); }, c);
}

inline double slope(const PowerLaw2P& c, double x) { return slope_power(c.a, c.b, x); }
inline double slope(const PowerLaw3P& c, double x) { return slope_power(c.a, c.b, x); }
inline double slope(const PowerLawExp3P& c, double x) {
    return (c.a * std::pow(x, c.a - 1.0) + c.b * std::pow(x, c.a)) * std::exp(c.b * x);
}
/// At exactly a changepoint this is the lower piece's derivative.
inline double slope(const PiecewisePowerLaw& c, double x) {
    if (c.pieces.empty()) throw Error("piecewise curve has no pieces");
    const auto& p = c.pieces[std::min(c.piece_index(x), c.pieces.size() - 1)];
    return slope_power(p.a, p.b, x);
}
inline double slope(const Curve& c, double x) {
    return std::visit([x](const auto& v) { return slope(v, x); }, c);
}

}  // namespace datamin
