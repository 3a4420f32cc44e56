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

// Dense matrix completion used to score unobserved cells. Missing entries are
// NaN; rows are users and columns are items.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "datamin/dataset.hpp"
#include "datamin/error.hpp"

namespace datamin {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Users x items view of the acquired observations.
class ObservedMatrix {
public:
    ObservedMatrix(std::vector<std::string> users, std::vector<std::string> items)
        : users_(std::move(users)), items_(std::move(items)),
          values_(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(users_.size()),
                                            static_cast<Eigen::Index>(items_.size()), kMissing)) {
        for (std::size_t i = 0; i < users_.size(); ++i)
            if (!user_pos_.emplace(users_[i], i).second) throw Error("duplicate user id " + users_[i]);
        for (std::size_t i = 0; i < items_.size(); ++i)
            if (!item_pos_.emplace(items_[i], i).second) throw Error("duplicate item id " + items_[i]);
    }

    static ObservedMatrix from_triples(std::vector<std::string> users, std::vector<std::string> items,
                                       std::span<const RatingTriple> known) {
        ObservedMatrix m(std::move(users), std::move(items));
        for (const auto& t : known) m.set(t.user, t.item, t.value);
        return m;
    }

    const std::vector<std::string>& users() const noexcept { return users_; }
    const std::vector<std::string>& items() const noexcept { return items_; }

    std::size_t user_index(const std::string& u) const {
        auto it = user_pos_.find(u);
        if (it == user_pos_.end()) throw Error("unknown user " + u);
        return it->second;
    }
    std::size_t item_index(const std::string& i) const {
        auto it = item_pos_.find(i);
        if (it == item_pos_.end()) throw Error("unknown item " + i);
        return it->second;
    }

    void set(const std::string& user, const std::string& item, double value) {
        values_(static_cast<Eigen::Index>(user_index(user)), static_cast<Eigen::Index>(item_index(item))) = value;
    }

    std::optional<double> get(const std::string& user, const std::string& item) const {
        const double v = values_(static_cast<Eigen::Index>(user_index(user)),
                                 static_cast<Eigen::Index>(item_index(item)));
        if (std::isnan(v)) return std::nullopt;
        return v;
    }

    std::size_t known_count() const { return static_cast<std::size_t>((values_.array() == values_.array()).count()); }

    /// Observed values with NaN for every missing cell.
    const Eigen::MatrixXd& dense() const noexcept { return values_; }

private:
    std::vector<std::string> users_, items_;
    std::unordered_map<std::string, std::size_t> user_pos_, item_pos_;
    Eigen::MatrixXd values_;
};

struct ImputeOptions {
    std::size_t iterations = 20;
    double tolerance = 1e-6;  // early exit on max-norm change of the missing cells
};

namespace detail {

inline std::size_t count_known(const Eigen::MatrixXd& x) {
    return static_cast<std::size_t>((x.array() == x.array()).count());
}

inline void require_known(const Eigen::MatrixXd& x) {
    if (count_known(x) == 0) throw Error("imputation needs at least one known entry");
}

}  // namespace detail

/// Missing cells set to their column mean, or the global mean for empty columns.
inline Eigen::MatrixXd mean_fill(const Eigen::MatrixXd& x) {
    detail::require_known(x);
    double total = 0.0;
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (!std::isnan(x(i, j))) {
                total += x(i, j);
                ++count;
            }
    const double global = total / static_cast<double>(count);
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double s = 0.0;
        std::size_t c = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (!std::isnan(x(i, j))) {
                s += x(i, j);
                ++c;
            }
        const double fill = c > 0 ? s / static_cast<double>(c) : global;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (std::isnan(x(i, j))) out(i, j) = fill;
    }
    return out;
}

/// Iterative rank-truncated SVD completion (hard impute). Known cells are
/// copied through unchanged; missing cells start at mean_fill and are
/// replaced by the rank-`rank` reconstruction each iteration.
inline Eigen::MatrixXd svd_impute(const Eigen::MatrixXd& x, std::size_t rank, ImputeOptions opts = {}) {
    const auto max_rank = static_cast<std::size_t>(std::min(x.rows(), x.cols()));
    if (rank < 1 || rank > max_rank)
        throw Error("svd rank " + std::to_string(rank) + " outside [1, " + std::to_string(max_rank) + "]");
    Eigen::MatrixXd f = mean_fill(x);
    const auto r = static_cast<Eigen::Index>(rank);
    for (std::size_t it = 0; it < opts.iterations; ++it) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(f, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::MatrixXd recon = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                                svd.matrixV().leftCols(r).transpose();
        double change = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                if (std::isnan(x(i, j))) {
                    change = std::max(change, std::abs(recon(i, j) - f(i, j)));
                    f(i, j) = recon(i, j);
                }
        if (change < opts.tolerance) break;
    }
    return f;
}

inline Eigen::MatrixXd svd_impute(const ObservedMatrix& m, std::size_t rank, ImputeOptions opts = {}) {
    return svd_impute(m.dense(), rank, opts);
}

/// Cosine similarity of two rows over their co-observed columns; nullopt when
/// they share no column, 0 when either restricted row is all zeros.
inline std::optional<double> co_observed_cosine(const Eigen::MatrixXd& x, Eigen::Index u, Eigen::Index v) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    bool shared = false;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double a = x(u, j), b = x(v, j);
        if (std::isnan(a) || std::isnan(b)) continue;
        shared = true;
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if (!shared) return std::nullopt;
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

/// User-based kNN: a missing (u, i) becomes the mean of item i over the k
/// users most cosine-similar to u among those who rated i and share at least
/// one item with u (ties to the lower row). Without such a neighbour the
/// item mean is used, then the global mean.
inline Eigen::MatrixXd knn_impute(const Eigen::MatrixXd& x, std::size_t k) {
    if (k < 1) throw Error("knn needs k >= 1");
    const Eigen::MatrixXd fallback = mean_fill(x);
    const Eigen::Index n = x.rows();
    std::vector<std::optional<double>> sim(static_cast<std::size_t>(n * n));
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = u + 1; v < n; ++v) {
            auto s = co_observed_cosine(x, u, v);
            sim[static_cast<std::size_t>(u * n + v)] = s;
            sim[static_cast<std::size_t>(v * n + u)] = s;
        }

    Eigen::MatrixXd out = x;
    std::vector<std::pair<double, Eigen::Index>> cand;
    for (Eigen::Index u = 0; u < n; ++u) {
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            if (!std::isnan(x(u, i))) continue;
            cand.clear();
            for (Eigen::Index v = 0; v < n; ++v) {
                if (v == u || std::isnan(x(v, i))) continue;
                const auto& s = sim[static_cast<std::size_t>(u * n + v)];
                if (s) cand.emplace_back(*s, v);
            }
            if (cand.empty()) {
                out(u, i) = fallback(u, i);
                continue;
            }
            const std::size_t take = std::min(k, cand.size());
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                              [](const auto& a, const auto& b) {
                                  return a.first != b.first ? a.first > b.first : a.second < b.second;
                              });
            double s = 0.0;
            for (std::size_t c = 0; c < take; ++c) s += x(cand[c].second, i);
            out(u, i) = s / static_cast<double>(take);
        }
    }
    return out;
}

inline Eigen::MatrixXd knn_impute(const ObservedMatrix& m, std::size_t k) { return knn_impute(m.dense(), k); }

namespace detail {

// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
inline Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const auto& ev = es.eigenvalues();
    const double cutoff = 1e-10 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cutoff ? 1.0 / ev(i) : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// EM for a multivariate Gaussian over items (rows are samples). E-step:
/// each row's missing block becomes its conditional mean given the observed
/// block; M-step: mean and covariance from the completed rows plus the
/// conditional covariances. Starts from mean_fill; zero iterations returns it.
inline Eigen::MatrixXd em_impute(const Eigen::MatrixXd& x, ImputeOptions opts = {}) {
    Eigen::MatrixXd f = mean_fill(x);
    const Eigen::Index n = x.rows(), p = x.cols();
    if (opts.iterations == 0) return f;

    std::vector<std::vector<Eigen::Index>> miss(static_cast<std::size_t>(n)), obs(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index j = 0; j < p; ++j)
            (std::isnan(x(r, j)) ? miss : obs)[static_cast<std::size_t>(r)].push_back(j);

    auto moments = [&](const Eigen::MatrixXd& filled, const Eigen::MatrixXd& cond_cov,
                       Eigen::VectorXd& mu, Eigen::MatrixXd& sigma) {
        mu = filled.colwise().mean().transpose();
        Eigen::MatrixXd centered = filled.rowwise() - mu.transpose();
        sigma = (centered.transpose() * centered + cond_cov) / static_cast<double>(n);
    };

    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    moments(f, Eigen::MatrixXd::Zero(p, p), mu, sigma);

    for (std::size_t it = 0; it < opts.iterations; ++it) {
        Eigen::MatrixXd cond_cov = Eigen::MatrixXd::Zero(p, p);
        double change = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto& m = miss[static_cast<std::size_t>(r)];
            const auto& o = obs[static_cast<std::size_t>(r)];
            if (m.empty()) continue;
            const auto nm = static_cast<Eigen::Index>(m.size()), no = static_cast<Eigen::Index>(o.size());
            Eigen::MatrixXd s_mm(nm, nm);
            for (Eigen::Index a = 0; a < nm; ++a)
                for (Eigen::Index b = 0; b < nm; ++b) s_mm(a, b) = sigma(m[a], m[b]);
            Eigen::VectorXd cond_mean(nm);
            for (Eigen::Index a = 0; a < nm; ++a) cond_mean(a) = mu(m[a]);
            if (no > 0) {
                Eigen::MatrixXd s_oo(no, no), s_mo(nm, no);
                Eigen::VectorXd dev(no);
                for (Eigen::Index a = 0; a < no; ++a) {
                    dev(a) = x(r, o[a]) - mu(o[a]);
                    for (Eigen::Index b = 0; b < no; ++b) s_oo(a, b) = sigma(o[a], o[b]);
                    for (Eigen::Index b = 0; b < nm; ++b) s_mo(b, a) = sigma(m[b], o[a]);
                }
                const Eigen::MatrixXd reg = s_mo * detail::psd_pinv(s_oo);
                cond_mean += reg * dev;
                s_mm -= reg * s_mo.transpose();
            }
            for (Eigen::Index a = 0; a < nm; ++a) {
                change = std::max(change, std::abs(cond_mean(a) - f(r, m[a])));
                f(r, m[a]) = cond_mean(a);
                for (Eigen::Index b = 0; b < nm; ++b) cond_cov(m[a], m[b]) += s_mm(a, b);
            }
        }
        moments(f, cond_cov, mu, sigma);
        if (change < opts.tolerance) break;
    }
    return f;
}

inline Eigen::MatrixXd em_impute(const ObservedMatrix& m, ImputeOptions opts = {}) {
    return em_impute(m.dense(), opts);
}

}  // namespace datamin
