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

// Biased matrix factorization (FunkSVD) trained by stochastic gradient descent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "datamin/dataset.hpp"
#include "datamin/error.hpp"
#include "datamin/random.hpp"

namespace datamin {

struct TrainConfig {
    std::size_t rank = 30;
    double learning_rate = 0.005;
    double regularization = 0.02;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (rank < 1) throw ConfigError("rank must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (!(regularization >= 0.0)) throw ConfigError("regularization must be nonnegative");
    }
};

class FactorModel {
public:
    FactorModel() = default;
    FactorModel(std::size_t rank, double global_mean) : rank_(rank), global_mean_(global_mean) {}

    std::size_t rank() const noexcept { return rank_; }
    double global_mean() const noexcept { return global_mean_; }

    const std::vector<std::string>& users() const noexcept { return user_ids_; }
    const std::vector<std::string>& items() const noexcept { return item_ids_; }

    std::span<const double> user_factors(std::size_t idx) const {
        return {user_factors_.data() + idx * rank_, rank_};
    }
    std::span<const double> item_factors(std::size_t idx) const {
        return {item_factors_.data() + idx * rank_, rank_};
    }
    double user_bias(std::size_t idx) const { return user_bias_[idx]; }
    double item_bias(std::size_t idx) const { return item_bias_[idx]; }

    /// Adds (or overwrites) a user's parameters.
    void set_user(const std::string& id, std::span<const double> factors, double bias) {
        set_row(id, factors, bias, user_index_, user_ids_, user_factors_, user_bias_);
    }
    void set_item(const std::string& id, std::span<const double> factors, double bias) {
        set_row(id, factors, bias, item_index_, item_ids_, item_factors_, item_bias_);
    }

    /// global_mean + b_u + b_i + <p_u, q_i>. An unknown user or item
    /// contributes neither a bias nor a factor term.
    double predict(const std::string& user, const std::string& item) const {
        auto u = user_index_.find(user);
        auto i = item_index_.find(item);
        double pred = global_mean_;
        if (u != user_index_.end()) pred += user_bias_[u->second];
        if (i != item_index_.end()) pred += item_bias_[i->second];
        if (u != user_index_.end() && i != item_index_.end()) {
            const double* p = user_factors_.data() + u->second * rank_;
            const double* q = item_factors_.data() + i->second * rank_;
            for (std::size_t k = 0; k < rank_; ++k) pred += p[k] * q[k];
        }
        return pred;
    }

    bool all_finite() const {
        if (!std::isfinite(global_mean_)) return false;
        for (const auto* v : {&user_factors_, &item_factors_, &user_bias_, &item_bias_})
            for (double x : *v)
                if (!std::isfinite(x)) return false;
        return true;
    }

private:
    friend FactorModel train(std::span<const RatingTriple>, const TrainConfig&);

    void set_row(const std::string& id, std::span<const double> factors, double bias,
                 std::unordered_map<std::string, std::size_t>& index, std::vector<std::string>& ids,
                 std::vector<double>& table, std::vector<double>& biases) {
        if (factors.size() != rank_) throw Error("factor vector length must equal the model rank");
        auto [it, inserted] = index.try_emplace(id, ids.size());
        if (inserted) {
            ids.push_back(id);
            table.insert(table.end(), factors.begin(), factors.end());
            biases.push_back(bias);
        } else {
            std::copy(factors.begin(), factors.end(), table.begin() + it->second * rank_);
            biases[it->second] = bias;
        }
    }

    std::size_t rank_ = 0;
    double global_mean_ = 0.0;
    std::unordered_map<std::string, std::size_t> user_index_, item_index_;
    std::vector<std::string> user_ids_, item_ids_;
    std::vector<double> user_factors_, item_factors_;
    std::vector<double> user_bias_, item_bias_;
};

/// One simultaneous SGD update of a user/item factor pair for residual err:
/// p += lr (err q - reg p), q += lr (err p - reg q), both from the old values.
inline void sgd_factor_update(std::span<double> p, std::span<double> q, double err, double lr,
                              double reg) {
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double pk = p[k], qk = q[k];
        p[k] += lr * (err * qk - reg * pk);
        q[k] += lr * (err * pk - reg * qk);
    }
}

inline FactorModel train(std::span<const RatingTriple> triples, const TrainConfig& cfg) {
    cfg.validate();
    if (triples.empty()) throw Error("cannot train on an empty rating set");

    FactorModel m(cfg.rank, 0.0);
    std::vector<std::uint32_t> uidx(triples.size()), iidx(triples.size());
    double sum = 0.0;
    for (std::size_t n = 0; n < triples.size(); ++n) {
        const auto& t = triples[n];
        auto [u, new_u] = m.user_index_.try_emplace(t.user, m.user_ids_.size());
        if (new_u) m.user_ids_.push_back(t.user);
        auto [i, new_i] = m.item_index_.try_emplace(t.item, m.item_ids_.size());
        if (new_i) m.item_ids_.push_back(t.item);
        uidx[n] = static_cast<std::uint32_t>(u->second);
        iidx[n] = static_cast<std::uint32_t>(i->second);
        sum += t.value;
    }
    m.global_mean_ = sum / static_cast<double>(triples.size());

    const std::size_t r = cfg.rank;
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> init(-0.05, 0.05);
    m.user_factors_.resize(m.user_ids_.size() * r);
    m.item_factors_.resize(m.item_ids_.size() * r);
    for (auto& x : m.user_factors_) x = init(rng);
    for (auto& x : m.item_factors_) x = init(rng);
    m.user_bias_.assign(m.user_ids_.size(), 0.0);
    m.item_bias_.assign(m.item_ids_.size(), 0.0);

    std::vector<std::uint32_t> order(triples.size());
    for (std::size_t n = 0; n < order.size(); ++n) order[n] = static_cast<std::uint32_t>(n);

    const double lr = cfg.learning_rate, reg = cfg.regularization;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (auto n : order) {
            const std::size_t u = uidx[n], i = iidx[n];
            double* p = m.user_factors_.data() + u * r;
            double* q = m.item_factors_.data() + i * r;
            double pred = m.global_mean_ + m.user_bias_[u] + m.item_bias_[i];
            for (std::size_t k = 0; k < r; ++k) pred += p[k] * q[k];
            const double err = triples[n].value - pred;
            m.user_bias_[u] += lr * (err - reg * m.user_bias_[u]);
            m.item_bias_[i] += lr * (err - reg * m.item_bias_[i]);
            sgd_factor_update({p, r}, {q, r}, err, lr, reg);
        }
        if (!m.all_finite()) throw TrainingError("parameters diverged to a non-finite value", epoch);
    }
    return m;
}

inline double mse(const FactorModel& model, std::span<const RatingTriple> eval) {
    if (eval.empty()) throw Error("mse of an empty evaluation set");
    double sse = 0.0;
    for (const auto& t : eval) {
        const double e = t.value - model.predict(t.user, t.item);
        sse += e * e;
    }
    return sse / static_cast<double>(eval.size());
}

struct ErrorSum {
    double sse = 0.0;
    std::size_t count = 0;

    double mean() const { return sse / static_cast<double>(count); }
};

/// Squared-error totals per user over eval.
inline std::map<std::string, ErrorSum> per_user_errors(const FactorModel& model,
                                                       std::span<const RatingTriple> eval) {
    std::map<std::string, ErrorSum> out;
    for (const auto& t : eval) {
        const double e = t.value - model.predict(t.user, t.item);
        auto& s = out[t.user];
        s.sse += e * e;
        ++s.count;
    }
    return out;
}

inline double user_mse(const FactorModel& model, std::span<const RatingTriple> eval,
                       const std::string& user) {
    ErrorSum s;
    for (const auto& t : eval) {
        if (t.user != user) continue;
        const double e = t.value - model.predict(t.user, t.item);
        s.sse += e * e;
        ++s.count;
    }
    if (s.count == 0) throw Error("user '" + user + "' has no triples in the evaluation set");
    return s.mean();
}

}  // namespace datamin
