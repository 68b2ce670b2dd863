#pragma once

// Parameter registry, the Adam optimizer, and a central-difference gradient
// checker. Parameters are leaf tensors with a deterministic iteration order;
// initialization is fan-in-scaled uniform for weights and zeros for biases,
// all driven by the store's seed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dcap/errors.hpp"
#include "dcap/nn/tensor.hpp"
#include "dcap/util.hpp"

namespace dcap::nn {

class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    // Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Tensor add_weight(const std::string& name, int rows, int cols) {
        double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        std::uniform_real_distribution<double> u(-bound, bound);
        Tensor t = Tensor::zeros({rows, cols}, true);
        for (double& v : t.values()) v = u(rng_);
        insert(name, t);
        return t;
    }

    Tensor add_zeros(const std::string& name, int rows, int cols) {
        Tensor t = Tensor::zeros({rows, cols}, true);
        insert(name, t);
        return t;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no parameter named '" + name + "'");
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : items_) {
            t.node().ensure_grad();
            std::fill(t.node().grad.begin(), t.node().grad.end(), 0.0);
        }
    }

  private:
    void insert(const std::string& name, const Tensor& t) {
        if (has(name)) throw Error("duplicate parameter name '" + name + "'");
        index_[name] = items_.size();
        items_.emplace_back(name, t);
    }

    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, std::size_t> index_;
};

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::map<std::string, std::vector<double>> m;  // first moments
    std::map<std::string, std::vector<double>> v;  // second moments
};

// Bias-corrected Adam update over every parameter in the store; gradients
// are zeroed afterwards.
inline void adam_step(ParamStore& store, AdamState& state) {
    for (const auto& [name, t] : store.items())
        if (t.node().grad.size() != t.size())
            throw MissingGrad("parameter '" + name + "' has no gradient; run backward first");

    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (const auto& [name, t] : store.items()) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != t.size()) m.assign(t.size(), 0.0);
        if (v.size() != t.size()) v.assign(t.size(), 0.0);
        auto& vals = t.node().values;
        auto& grad = t.node().grad;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            double mhat = m[i] / c1;
            double vhat = v[i] / c2;
            vals[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
            grad[i] = 0.0;
        }
    }
}

// Central-difference check of reverse-mode gradients on a seeded subsample of
// coordinates. Returns the max relative error, with |a - n| compared against
// max(|a|, |n|, 0.01) so coordinates whose gradient the finite difference
// itself cannot resolve do not dominate.
inline double grad_check(const std::function<Tensor()>& f, ParamStore& store, double eps = 1e-4,
                         int n_coords = 200, std::uint64_t seed = 12345) {
    store.zero_grads();
    Tensor loss = f();
    backward(loss);

    std::vector<std::pair<std::size_t, std::size_t>> coords;  // (param idx, flat idx)
    for (std::size_t p = 0; p < store.items().size(); ++p)
        for (std::size_t i = 0; i < store.items()[p].second.size(); ++i) coords.emplace_back(p, i);
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (static_cast<int>(coords.size()) > n_coords) coords.resize(n_coords);

    double max_rel = 0.0;
    for (auto [p, i] : coords) {
        const Tensor& t = store.items()[p].second;
        double analytic = t.node().grad[i];
        double saved = t.node().values[i];
        double fp, fm;
        {
            NoGradGuard ng;
            t.node().values[i] = saved + eps;
            fp = f().value();
            t.node().values[i] = saved - eps;
            fm = f().value();
            t.node().values[i] = saved;
        }
        double numeric = (fp - fm) / (2.0 * eps);
        double rel = std::abs(analytic - numeric) /
                     std::max({std::abs(analytic), std::abs(numeric), 1e-2});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace dcap::nn
