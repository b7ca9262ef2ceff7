#include "trustnbr/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/rng.hpp"

namespace trustnbr {

double Tree::predict(std::span<const double> x) const {
    int n = 0;
    while (!nodes[n].is_leaf()) {
        const auto& node = nodes[n];
        n = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return nodes[n].value;
}

int Tree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (!nodes[i].is_leaf()) {
            d[nodes[i].left] = d[i] + 1;
            d[nodes[i].right] = d[i] + 1;
        }
    }
    return deepest;
}

nlohmann::json to_json(const ForestParams& p) {
    return {{"n_trees", p.n_trees},
            {"max_depth", p.max_depth},
            {"min_leaf", p.min_leaf},
            {"features_per_split", p.features_per_split}};
}

ForestParams forest_params_from_json(const nlohmann::json& j) {
    ForestParams p;
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.min_leaf = j.value("min_leaf", p.min_leaf);
    p.features_per_split = j.value("features_per_split", p.features_per_split);
    return p;
}

namespace {

struct Sample {
    double value;
    int label;
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const ForestParams& params, std::size_t mtry, Rng& rng)
        : data_(data), params_(params), mtry_(mtry), rng_(rng) {}

    Tree build(std::vector<std::size_t> rows) {
        grow(rows, 0);
        fill_leaf_values();
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = 0.0;
    };

    int grow(std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        std::size_t n1 = 0;
        for (auto r : rows) n1 += static_cast<std::size_t>(data_.labels[r]);
        const std::size_t n = rows.size();
        const bool pure = n1 == 0 || n1 == n;
        const auto min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
        if (depth >= params_.max_depth || pure || n < 2 * min_leaf) return id;

        const Split split = best_split(rows, n1, min_leaf);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows)
            (data_.features(r, split.feature) <= split.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree_.nodes[id].feature = split.feature;
        tree_.nodes[id].threshold = split.threshold;
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    // Maximizes sum over children of (n1^2 + n0^2) / n, equivalent to minimizing the
    // weighted Gini impurity. Candidates are visited by ascending feature then
    // threshold and only a strictly better score replaces the incumbent, so equal
    // gains resolve to the lowest feature index and threshold.
    Split best_split(const std::vector<std::size_t>& rows, std::size_t n1, std::size_t min_leaf) {
        const std::size_t m = data_.n_features();
        std::vector<std::size_t> candidates(m);
        std::iota(candidates.begin(), candidates.end(), 0);
        for (std::size_t i = 0; i < mtry_; ++i) {
            std::size_t j = i + rng_.uniform_index(m - i);
            std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(mtry_);
        std::sort(candidates.begin(), candidates.end());

        const auto n = static_cast<double>(rows.size());
        const double pos = static_cast<double>(n1);
        const double parent = (pos * pos + (n - pos) * (n - pos)) / n;
        Split best;
        best.score = parent * (1.0 + 1e-12);

        std::vector<Sample> samples(rows.size());
        for (auto f : candidates) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                samples[i] = {data_.features(rows[i], f), data_.labels[rows[i]]};
            std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.value < b.value; });

            double left_n = 0.0, left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
                left_n += 1.0;
                left_pos += samples[i].label;
                if (samples[i].value == samples[i + 1].value) continue;
                if (static_cast<std::size_t>(left_n) < min_leaf || samples.size() - static_cast<std::size_t>(left_n) < min_leaf)
                    continue;
                const double right_n = n - left_n;
                const double right_pos = pos - left_pos;
                const double left_neg = left_n - left_pos;
                const double right_neg = right_n - right_pos;
                const double score = (left_pos * left_pos + left_neg * left_neg) / left_n +
                                     (right_pos * right_pos + right_neg * right_neg) / right_n;
                if (score > best.score) {
                    double t = 0.5 * (samples[i].value + samples[i + 1].value);
                    if (!(t < samples[i + 1].value)) t = samples[i].value;
                    best = {static_cast<int>(f), t, score};
                }
            }
        }
        return best;
    }

    // Leaf value is the positive fraction of all training rows routed to the leaf,
    // not only the bootstrap draws that grew it.
    void fill_leaf_values() {
        std::vector<double> pos(tree_.nodes.size(), 0.0);
        std::vector<std::int64_t> count(tree_.nodes.size(), 0);
        for (std::size_t r = 0; r < data_.size(); ++r) {
            auto x = data_.features.row(r);
            int n = 0;
            while (!tree_.nodes[n].is_leaf())
                n = x[tree_.nodes[n].feature] <= tree_.nodes[n].threshold ? tree_.nodes[n].left : tree_.nodes[n].right;
            pos[n] += data_.labels[r];
            ++count[n];
        }
        for (std::size_t i = 0; i < tree_.nodes.size(); ++i) {
            auto& node = tree_.nodes[i];
            if (!node.is_leaf()) continue;
            node.samples = count[i];
            node.value = pos[i] / static_cast<double>(count[i]);
        }
    }

    const Dataset& data_;
    const ForestParams& params_;
    std::size_t mtry_;
    Rng& rng_;
    Tree tree_;
};

}  // namespace

Forest train_forest(const Dataset& train, const ForestParams& params, std::uint64_t seed) {
    if (train.size() == 0) throw DataError("train_forest: empty training data");
    if (params.n_trees < 1) throw std::invalid_argument("train_forest: n_trees must be >= 1");
    if (params.max_depth < 0) throw std::invalid_argument("train_forest: max_depth must be >= 0");
    if (params.min_leaf < 1) throw std::invalid_argument("train_forest: min_leaf must be >= 1");
    const std::size_t n_pos = train.positives();
    if (n_pos == 0 || n_pos == train.size()) throw DataError("single-class training data");

    const std::size_t m = train.n_features();
    std::size_t mtry = params.features_per_split > 0
                           ? static_cast<std::size_t>(params.features_per_split)
                           : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
    mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(m, 1));

    Forest forest;
    forest.n_features = m;
    forest.base_rate = static_cast<double>(n_pos) / static_cast<double>(train.size());
    forest.params = params;
    forest.seed = seed;
    forest.trees.resize(static_cast<std::size_t>(params.n_trees));

    parallel_for(forest.trees.size(), [&](std::size_t t) {
        Rng rng({seed, static_cast<std::uint64_t>(t)});
        std::vector<std::size_t> bootstrap(train.size());
        for (auto& r : bootstrap) r = rng.uniform_index(train.size());
        TreeBuilder builder(train, params, mtry, rng);
        forest.trees[t] = builder.build(std::move(bootstrap));
    });
    return forest;
}

double predict_proba(const Forest& f, std::span<const double> x) {
    if (x.size() != f.n_features)
        throw DimensionError("predict_proba: expected " + std::to_string(f.n_features) + " features, got " +
                             std::to_string(x.size()));
    if (f.trees.empty()) throw std::invalid_argument("predict_proba: empty forest");
    double sum = 0.0;
    for (const auto& t : f.trees) sum += t.predict(x);
    return sum / static_cast<double>(f.trees.size());
}

std::vector<double> predict_proba(const Forest& f, const Matrix& rows) {
    std::vector<double> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = predict_proba(f, rows.row(i));
    return out;
}

int predict_label(const Forest& f, std::span<const double> x, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("predict_label: threshold outside [0,1]");
    return predict_proba(f, x) >= threshold ? 1 : 0;
}

// ---------------------------------------------------------------------------

std::string serialize_forest(const Forest& f) {
    if (f.trees.empty()) throw std::invalid_argument("serialize_forest: forest has no trees");
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       value = nlohmann::json::array(), samples = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
            samples.push_back(n.samples);
        }
        trees.push_back({{"feature", feature},
                         {"threshold", threshold},
                         {"left", left},
                         {"right", right},
                         {"value", value},
                         {"samples", samples}});
    }
    nlohmann::json j = {{"format", "trustnbr-forest"},
                        {"version", kForestFormatVersion},
                        {"n_features", f.n_features},
                        {"base_rate", f.base_rate},
                        {"seed", f.seed},
                        {"params", to_json(f.params)},
                        {"trees", trees}};
    return j.dump() + "\n";
}

Forest deserialize_forest(const std::string& bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("forest: corrupted payload: ") + e.what());
    }
    try {
        if (j.at("format") != "trustnbr-forest") throw FormatError("forest: not a forest file");
        if (j.at("version").get<int>() != kForestFormatVersion)
            throw FormatError("forest: version mismatch (file " + j.at("version").dump() + ", expected " +
                              std::to_string(kForestFormatVersion) + ")");
        Forest f;
        f.n_features = j.at("n_features").get<std::size_t>();
        f.base_rate = j.at("base_rate").get<double>();
        f.seed = j.at("seed").get<std::uint64_t>();
        f.params = forest_params_from_json(j.at("params"));
        for (const auto& jt : j.at("trees")) {
            const auto feature = jt.at("feature").get<std::vector<int>>();
            const auto threshold = jt.at("threshold").get<std::vector<double>>();
            const auto left = jt.at("left").get<std::vector<int>>();
            const auto right = jt.at("right").get<std::vector<int>>();
            const auto value = jt.at("value").get<std::vector<double>>();
            const auto samples = jt.at("samples").get<std::vector<std::int64_t>>();
            const std::size_t n = feature.size();
            if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
                samples.size() != n)
                throw FormatError("forest: node arrays have inconsistent lengths");
            Tree t;
            t.nodes.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                auto& node = t.nodes[i];
                node = {feature[i], threshold[i], left[i], right[i], value[i], samples[i]};
                if (node.is_leaf()) {
                    if (!(node.value >= 0.0 && node.value <= 1.0) || node.samples < 1)
                        throw FormatError("forest: invalid leaf at node " + std::to_string(i));
                } else {
                    const auto self = static_cast<int>(i);
                    if (static_cast<std::size_t>(node.feature) >= f.n_features || node.left <= self ||
                        node.right <= self || static_cast<std::size_t>(node.left) >= n ||
                        static_cast<std::size_t>(node.right) >= n || !std::isfinite(node.threshold))
                        throw FormatError("forest: invalid internal node " + std::to_string(i));
                }
            }
            f.trees.push_back(std::move(t));
        }
        if (f.trees.empty()) throw FormatError("forest: no trees");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("forest: ") + e.what());
    }
}

}  // namespace trustnbr
