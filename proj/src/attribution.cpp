#include "trustnbr/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/rng.hpp"

namespace trustnbr {

namespace {

void check_inputs(const Forest& f, std::span<const double> x, const Matrix& background, const char* who) {
    if (f.trees.empty()) throw std::invalid_argument(std::string(who) + ": empty forest");
    if (background.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty background");
    if (x.size() != f.n_features || background.cols() != f.n_features)
        throw DimensionError(std::string(who) + ": dimension mismatch");
}

// weight(a, b) = a! b! / (a + b + 1)!
class ShapleyWeights {
public:
    explicit ShapleyWeights(std::size_t max_players) : n_(max_players + 1), w_(n_ * n_, 0.0) {
        for (std::size_t a = 0; a < n_; ++a) {
            for (std::size_t b = 0; a + b < n_; ++b) {
                // 1 / ((a+b+1) * C(a+b, a))
                double binom = 1.0;
                for (std::size_t i = 1; i <= a; ++i)
                    binom = binom * static_cast<double>(b + i) / static_cast<double>(i);
                w_[a * n_ + b] = 1.0 / (static_cast<double>(a + b + 1) * binom);
            }
        }
    }
    double operator()(std::size_t a, std::size_t b) const { return w_[a * n_ + b]; }

private:
    std::size_t n_;
    std::vector<double> w_;
};

enum : char { kUnseen = 0, kFromX = 1, kFromBackground = 2 };

class InterventionalWalker {
public:
    InterventionalWalker(const Tree& tree, std::span<const double> x, const ShapleyWeights& weights,
                         std::vector<double>& phi)
        : tree_(tree), x_(x), weights_(weights), phi_(phi), origin_(x.size(), kUnseen) {}

    void run(std::span<const double> z) {
        z_ = z;
        walk(0);
    }

private:
    void walk(int n) {
        const TreeNode& node = tree_.nodes[n];
        if (node.is_leaf()) {
            const std::size_t na = from_x_.size();
            const std::size_t nb = from_bg_.size();
            if (na > 0) {
                const double w = weights_(na - 1, nb) * node.value;
                for (int j : from_x_) phi_[j] += w;
            }
            if (nb > 0) {
                const double w = weights_(na, nb - 1) * node.value;
                for (int j : from_bg_) phi_[j] -= w;
            }
            return;
        }
        const int j = node.feature;
        const int x_child = x_[j] <= node.threshold ? node.left : node.right;
        const int z_child = z_[j] <= node.threshold ? node.left : node.right;
        if (x_child == z_child) {
            walk(x_child);
            return;
        }
        if (origin_[j] == kFromX) {
            walk(x_child);
            return;
        }
        if (origin_[j] == kFromBackground) {
            walk(z_child);
            return;
        }
        origin_[j] = kFromX;
        from_x_.push_back(j);
        walk(x_child);
        from_x_.pop_back();

        origin_[j] = kFromBackground;
        from_bg_.push_back(j);
        walk(z_child);
        from_bg_.pop_back();
        origin_[j] = kUnseen;
    }

    const Tree& tree_;
    std::span<const double> x_;
    std::span<const double> z_;
    const ShapleyWeights& weights_;
    std::vector<double>& phi_;
    std::vector<char> origin_;
    std::vector<int> from_x_;
    std::vector<int> from_bg_;
};

std::size_t max_players(const Forest& f) {
    int depth = 0;
    for (const auto& t : f.trees) depth = std::max(depth, t.depth());
    return std::min<std::size_t>(static_cast<std::size_t>(depth), f.n_features);
}

}  // namespace

ShapVector tree_shap(const Forest& f, std::span<const double> x, const Matrix& background) {
    check_inputs(f, x, background, "tree_shap");
    const std::size_t m = f.n_features;
    const ShapleyWeights weights(max_players(f));

    std::vector<double> phi(m, 0.0);
    double base_sum = 0.0;
    for (const auto& tree : f.trees) {
        InterventionalWalker walker(tree, x, weights, phi);
        for (std::size_t b = 0; b < background.rows(); ++b) {
            walker.run(background.row(b));
            base_sum += tree.predict(background.row(b));
        }
    }
    const double denom = static_cast<double>(f.trees.size()) * static_cast<double>(background.rows());
    ShapVector out;
    out.phi.resize(m);
    for (std::size_t j = 0; j < m; ++j) out.phi[j] = phi[j] / denom;
    out.base_value = base_sum / denom;
    out.model_output = predict_proba(f, x);
    return out;
}

ShapVector brute_force_shapley(const Forest& f, std::span<const double> x, const Matrix& background) {
    check_inputs(f, x, background, "brute_force_shapley");
    const std::size_t m = f.n_features;
    if (m > kMaxBruteForceFeatures)
        throw std::invalid_argument("brute_force_shapley: too many features for subset enumeration (m=" +
                                    std::to_string(m) + ")");

    const std::size_t n_subsets = std::size_t{1} << m;
    std::vector<double> value(n_subsets, 0.0);
    std::vector<double> hybrid(m);
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
        double sum = 0.0;
        for (std::size_t b = 0; b < background.rows(); ++b) {
            auto z = background.row(b);
            for (std::size_t j = 0; j < m; ++j) hybrid[j] = (mask >> j) & 1 ? x[j] : z[j];
            sum += predict_proba(f, hybrid);
        }
        value[mask] = sum / static_cast<double>(background.rows());
    }

    // |S|! (m - |S| - 1)! / m!
    std::vector<double> coalition_weight(m, 0.0);
    for (std::size_t s = 0; s < m; ++s) {
        double w = 1.0 / static_cast<double>(m);
        // 1 / (m * C(m-1, s))
        for (std::size_t i = 1; i <= s; ++i) w *= static_cast<double>(i) / static_cast<double>(m - i);
        coalition_weight[s] = w;
    }

    ShapVector out;
    out.phi.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        for (std::size_t mask = 0; mask < n_subsets; ++mask) {
            if (mask & bit) continue;
            const auto s = static_cast<std::size_t>(std::popcount(mask));
            out.phi[j] += coalition_weight[s] * (value[mask | bit] - value[mask]);
        }
    }
    out.base_value = value[0];
    out.model_output = predict_proba(f, x);
    return out;
}

GlobalImportance global_importance(const ShapMatrix& shap) {
    if (shap.empty()) throw std::invalid_argument("global_importance: empty SHAP matrix");
    const std::size_t m = shap.front().phi.size();
    GlobalImportance gi;
    gi.weights.assign(m, 0.0);
    for (const auto& s : shap) {
        if (s.phi.size() != m) throw DimensionError("global_importance: inconsistent SHAP vector lengths");
        for (std::size_t j = 0; j < m; ++j) gi.weights[j] += std::abs(s.phi[j]);
    }
    for (auto& w : gi.weights) w /= static_cast<double>(shap.size());
    return gi;
}

ShapMatrix shap_for_dataset(const Forest& f, const Matrix& rows, const Matrix& background) {
    if (rows.rows() > 0 && rows.cols() != f.n_features) throw DimensionError("shap_for_dataset: dimension mismatch");
    ShapMatrix out(rows.rows());
    parallel_for(rows.rows(), [&](std::size_t i) { out[i] = tree_shap(f, rows.row(i), background); });
    return out;
}

Matrix select_background(const Dataset& train, std::size_t size, std::uint64_t seed) {
    if (train.size() == 0) throw DataError("select_background: empty training data");
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (size < idx.size()) {
        Rng rng(seed);
        for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
        idx.resize(size);
        std::sort(idx.begin(), idx.end());
    }
    return train.features.select_rows(idx);
}

}  // namespace trustnbr
