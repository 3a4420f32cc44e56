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

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "datamin/curves.hpp"
#include "datamin/dataset.hpp"
#include "datamin/error.hpp"
#include "datamin/fit.hpp"
#include "datamin/minimizer.hpp"

namespace datamin {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Numbers

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw Error("cannot format double");
    return {buf, end};
}

inline double parse_number(std::string_view s) {
    s = detail::trim(s);
    double x = 0.0;
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (!detail::parse_double(s, x)) throw ParseError("not a number: '" + std::string(s) + "'", 0);
    return x;
}

/// JSON has no infinities or NaN; they are written as strings.
inline Json json_number(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

/// Splits one CSV record; quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> parse_csv_record(std::string_view line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back() += c;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", 0);
    return out;
}

inline void write_points_csv(std::ostream& os, std::span<const PerformancePoint> points) {
    os << "size,value\n";
    for (const auto& p : points) os << p.size << ',' << format_double(p.value) << '\n';
}

/// Reads "size,value" rows; a non-numeric first row is a header.
inline std::vector<PerformancePoint> read_points_csv(std::istream& is) {
    std::vector<PerformancePoint> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = parse_csv_record(line);
        if (f.size() != 2) throw ParseError("expected 2 fields, got " + std::to_string(f.size()), lineno);
        double size = 0.0, value = 0.0;
        const bool ok = detail::parse_double(detail::trim(f[0]), size) && detail::parse_double(detail::trim(f[1]), value);
        if (!ok) {
            if (out.empty() && lineno == 1) continue;
            throw ParseError("malformed point row", lineno);
        }
        if (!(size >= 1.0) || size != std::floor(size)) throw ParseError("size must be a positive integer", lineno);
        out.push_back({static_cast<std::size_t>(size), value});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Summary rows

struct SummaryRow {
    std::string dataset;
    std::string policy;
    std::string method;
    std::string rule;
    double threshold = 0.0;
    std::size_t q = 0;
    std::uint64_t seed = 0;
    double final_fraction = 0.0;
    std::size_t stop_size = 0;
    std::string status = "ok";

    friend bool operator==(const SummaryRow& a, const SummaryRow& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.dataset == b.dataset && a.policy == b.policy && a.method == b.method && a.rule == b.rule &&
               same(a.threshold, b.threshold) && a.q == b.q && a.seed == b.seed &&
               same(a.final_fraction, b.final_fraction) && a.stop_size == b.stop_size && a.status == b.status;
    }
};

inline constexpr std::string_view kSummaryHeader =
    "dataset,policy,method,rule,threshold,q,seed,final_fraction,stop_size,status";

inline SummaryRow summary_row(const MinimizationRun& run, std::string dataset) {
    SummaryRow r;
    r.dataset = std::move(dataset);
    r.policy = to_string(run.policy);
    r.method = to_string(run.method);
    r.rule = to_string(run.rule.kind);
    r.threshold = run.rule.threshold;
    r.q = run.q;
    r.seed = run.seed;
    r.final_fraction = run.final_fraction;
    r.stop_size = run.stop_size;
    return r;
}

inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
    os << kSummaryHeader << '\n';
    for (const auto& r : rows)
        os << csv_field(r.dataset) << ',' << csv_field(r.policy) << ',' << csv_field(r.method) << ','
           << csv_field(r.rule) << ',' << format_double(r.threshold) << ',' << r.q << ',' << r.seed << ','
           << format_double(r.final_fraction) << ',' << r.stop_size << ',' << csv_field(r.status) << '\n';
}

inline std::vector<SummaryRow> read_summary_csv(std::istream& is) {
    std::vector<SummaryRow> out;
    std::string line;
    std::size_t lineno = 0;
    auto to_uint = [&](const std::string& s) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError("not an integer: '" + s + "'", lineno);
        return v;
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (lineno == 1) {
            if (detail::trim(line) != kSummaryHeader) throw ParseError("unexpected summary header", lineno);
            continue;
        }
        if (detail::trim(line).empty()) continue;
        const auto f = parse_csv_record(line);
        if (f.size() != 10) throw ParseError("expected 10 fields, got " + std::to_string(f.size()), lineno);
        SummaryRow r;
        r.dataset = f[0];
        r.policy = f[1];
        r.method = f[2];
        r.rule = f[3];
        try {
            r.threshold = parse_number(f[4]);
            r.final_fraction = parse_number(f[7]);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
        r.q = to_uint(f[5]);
        r.seed = to_uint(f[6]);
        r.stop_size = to_uint(f[8]);
        r.status = f[9];
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline Json keys_json(std::span<const RatingTriple> triples) {
    Json a = Json::array();
    for (const auto& t : triples) a.push_back(Json::array({t.user, t.item}));
    return a;
}

inline Json split_manifest(const DatasetSplit& s) {
    return Json{{"seed", s.seed},
                {"counts",
                 {{"initial", s.initial.size()},
                  {"validation", s.validation.size()},
                  {"test", s.test.size()},
                  {"pool", s.pool.size()}}},
                {"initial", keys_json(s.initial)},
                {"validation", keys_json(s.validation)},
                {"test", keys_json(s.test)},
                {"pool", keys_json(s.pool)}};
}

namespace detail {

inline Json power_params(double a, double b) {
    // Both conventions: a * x^(-b) and a * x^exponent.
    return Json{{"a", a}, {"b", b}, {"exponent", -b}};
}

}  // namespace detail

inline Json curve_json(const Curve& curve) {
    return std::visit(
        [](const auto& c) -> Json {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, PowerLaw2P>) {
                return Json{{"family", to_string(CurveFamily::PowerLaw2P)}, {"params", detail::power_params(c.a, c.b)}};
            } else if constexpr (std::is_same_v<T, PowerLaw3P>) {
                auto p = detail::power_params(c.a, c.b);
                p["c"] = c.c;
                return Json{{"family", to_string(CurveFamily::PowerLaw3P)}, {"params", p}};
            } else if constexpr (std::is_same_v<T, PowerLawExp3P>) {
                return Json{{"family", to_string(CurveFamily::PowerLawExp3P)},
                            {"params", {{"a", c.a}, {"b", c.b}, {"c", c.c}}}};
            } else {
                Json pieces = Json::array();
                for (const auto& p : c.pieces) pieces.push_back(detail::power_params(p.a, p.b));
                return Json{{"family", to_string(family_of(Curve{c}))},
                            {"params", {{"pieces", pieces}}},
                            {"changepoints", c.changepoints}};
            }
        },
        curve);
}

inline Json fit_json(const FitReport& f) {
    Json j = curve_json(f.curve);
    j["weighted_sse"] = json_number(f.weighted_sse);
    j["iterations"] = f.iterations;
    j["converged"] = f.converged;
    if (!f.objective_trace.empty()) {
        Json t = Json::array();
        for (double v : f.objective_trace) t.push_back(json_number(v));
        j["objective_trace"] = t;
    }
    return j;
}

inline Json points_json(std::span<const PerformancePoint> points) {
    Json a = Json::array();
    for (const auto& p : points) a.push_back(Json::array({p.size, json_number(p.value)}));
    return a;
}

/// Full trace of a run. Each batch stores only the newly available points;
/// the prefix grid at batch k is the union of batches 0..k plus the points
/// that predate collection.
inline Json run_json(const MinimizationRun& run) {
    Json batches = Json::array();
    std::size_t seen = 0;
    for (const auto& b : run.batches) {
        Json j{{"acquired_count", b.acquired_count}, {"cumulative_size", b.cumulative_size}};
        j["new_points"] = points_json(std::span(b.points).subspan(std::min(seen, b.points.size())));
        seen = b.points.size();
        j["fit"] = b.fit ? fit_json(*b.fit) : Json(nullptr);
        j["slope_estimate"] = b.slope_estimate ? json_number(*b.slope_estimate) : Json(nullptr);
        if (b.relative_fraction) j["relative_fraction"] = json_number(*b.relative_fraction);
        j["stopped"] = b.stopped;
        batches.push_back(std::move(j));
    }
    Json j{{"policy", to_string(run.policy)},
           {"method", to_string(run.method)},
           {"rule",
            {{"kind", to_string(run.rule.kind)},
             {"threshold", json_number(run.rule.threshold)},
             {"literal_comparison", run.rule.literal_comparison}}},
           {"seed", run.seed},
           {"q", run.q},
           {"initial_size", run.initial_size},
           {"pool_size", run.pool_size},
           {"stopped", run.stopped},
           {"stop_size", run.stop_size},
           {"final_fraction", json_number(run.final_fraction)}};
    if (run.failure) j["failure"] = *run.failure;
    j["batches"] = std::move(batches);
    if (!run.reference_points.empty()) j["reference_points"] = points_json(run.reference_points);
    return j;
}

// ---------------------------------------------------------------------------
// Files

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline std::vector<PerformancePoint> load_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return read_points_csv(in);
}

}  // namespace datamin
