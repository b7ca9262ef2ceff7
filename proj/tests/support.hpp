#pragma once

// Shared fixtures and reference implementations for the tests. The oracles here are
// written from the definitions and deliberately share no code with the library.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "trustnbr/attribution.hpp"
#include "trustnbr/dataset.hpp"
#include "trustnbr/forest.hpp"
#include "trustnbr/retrieval.hpp"
#include "trustnbr/rng.hpp"

namespace testsupport {

using namespace trustnbr;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("trustnbr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Gaussian features, label from a noisy linear rule; both classes present.
inline Dataset random_dataset(std::size_t n, std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.features = Matrix(n, m);
    d.labels.resize(n);
    d.ids.resize(n);
    for (std::size_t j = 0; j < m; ++j) d.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            d.features(i, j) = rng.normal();
            s += (j % 2 == 0 ? 1.0 : -0.7) * d.features(i, j);
        }
        d.labels[i] = s + 0.5 * rng.normal() > 0.0 ? 1 : 0;
        d.ids[i] = static_cast<InstanceId>(i);
    }
    d.labels[0] = 0;
    d.labels[1] = 1;
    return d;
}

inline Matrix random_matrix(std::size_t n, std::size_t m, Rng& rng) {
    Matrix x(n, m);
    for (double& v : x.values()) v = rng.normal();
    return x;
}

/// A one-split tree: x[feature] <= threshold -> lo, else hi.
inline Tree stump(int feature, double threshold, double lo, double hi) {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = feature;
    t.nodes[0].threshold = threshold;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].value = lo;
    t.nodes[2].value = hi;
    return t;
}

inline Forest forest_of(std::vector<Tree> trees, std::size_t m, double base_rate = 0.5) {
    Forest f;
    f.trees = std::move(trees);
    f.n_features = m;
    f.base_rate = base_rate;
    f.params.n_trees = static_cast<int>(f.trees.size());
    return f;
}

/// Interventional value function v(S) = mean over background rows z of f(x_S, z_{~S}).
inline double coalition_value(const Forest& f, std::span<const double> x, const Matrix& background,
                              std::uint32_t mask) {
    double total = 0.0;
    std::vector<double> hybrid(x.size());
    for (std::size_t b = 0; b < background.rows(); ++b) {
        for (std::size_t j = 0; j < x.size(); ++j) hybrid[j] = (mask >> j) & 1u ? x[j] : background(b, j);
        total += predict_proba(f, hybrid);
    }
    return total / static_cast<double>(background.rows());
}

/// Shapley values of the interventional game, from the subset formula.
inline std::vector<double> oracle_shapley(const Forest& f, std::span<const double> x, const Matrix& background) {
    const std::size_t m = x.size();
    std::vector<double> v(std::size_t{1} << m);
    for (std::uint32_t s = 0; s < v.size(); ++s) v[s] = coalition_value(f, x, background, s);
    std::vector<double> fact(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> phi(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::uint32_t s = 0; s < v.size(); ++s) {
            if ((s >> j) & 1u) continue;
            const auto size = static_cast<std::size_t>(std::popcount(s));
            const double w = fact[size] * fact[m - size - 1] / fact[m];
            phi[j] += w * (v[s | (1u << j)] - v[s]);
        }
    }
    return phi;
}

inline double oracle_distance(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += w[j] * (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
}

/// Every case's distance to the query computed from the table definitions, then sorted.
inline std::vector<Neighbor> oracle_knn(const CaseBase& cb, CaseRef q, std::size_t k, DistanceKind kind) {
    const std::size_t m = cb.n_features();
    std::vector<double> ones(m, 1.0), local(m);
    for (std::size_t j = 0; j < m; ++j) local[j] = std::abs(q.phi[j]);
    std::vector<Neighbor> all;
    for (std::size_t i = 0; i < cb.size(); ++i) {
        double d = 0.0;
        switch (kind) {
            case DistanceKind::Features: d = oracle_distance(ones, q.features, cb.features(i)); break;
            case DistanceKind::Shap: d = oracle_distance(ones, q.phi, cb.phi(i)); break;
            case DistanceKind::GlobalWeighted:
                d = oracle_distance(cb.global_importance().weights, q.features, cb.features(i));
                break;
            case DistanceKind::LocalWeighted: d = oracle_distance(local, q.features, cb.features(i)); break;
        }
        all.push_back({i, cb.id(i), d});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

/// Average precision straight from the definition: mean over positives of the
/// precision among the items ranked at or above it. Ties keep input order.
inline double oracle_average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    double sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 1) continue;
        ++positives;
        std::size_t rank = 0, hits = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const bool above = scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
            if (!above) continue;
            ++rank;
            hits += labels[j] == 1;
        }
        sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
    return sum / static_cast<double>(positives);
}

/// Case base with random features and SHAP-like vectors; global importance from the
/// SHAP rows. Values drawn from a small grid when `ties` so distances collide.
inline CaseBase random_case_base(std::size_t n, std::size_t m, std::uint64_t seed, bool ties = false) {
    Rng rng(seed);
    auto draw = [&] { return ties ? static_cast<double>(rng.uniform_index(3)) : rng.normal(); };
    std::vector<Case> cases(n);
    ShapMatrix shap;
    for (std::size_t i = 0; i < n; ++i) {
        Case& c = cases[i];
        c.id = static_cast<InstanceId>(1000 + (i * 7919) % (n * 3 + 1));
        c.features.resize(m);
        c.shap.phi.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            c.features[j] = draw();
            c.shap.phi[j] = draw() * 0.1;
        }
        c.true_label = static_cast<int>(rng.uniform_index(2));
        shap.push_back(c.shap);
    }
    GlobalImportance gi = global_importance(shap);
    return CaseBase(std::move(cases), std::move(gi));
}

}  // namespace testsupport
