#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trustnbr/dataset.hpp"

namespace trustnbr {

/// One node of a binary decision tree. Internal nodes route x to `left` when
/// x[feature] <= threshold; leaves carry the positive-class fraction of the training
/// rows that reach them.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::int64_t samples = 0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes in preorder, root at index 0; every child index is greater than its parent's.
struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    int depth() const;
};

struct ForestParams {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 1;
    /// Candidate features per split; 0 selects ceil(sqrt(n_features)).
    int features_per_split = 0;

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

nlohmann::json to_json(const ForestParams& p);
ForestParams forest_params_from_json(const nlohmann::json& j);

struct Forest {
    std::vector<Tree> trees;
    std::size_t n_features = 0;
    double base_rate = 0.0;
    ForestParams params;
    std::uint64_t seed = 0;
};

/// Bagged CART trees with Gini impurity. Tree t draws its bootstrap from the stream
/// (seed, t), so the result does not depend on how trees are scheduled.
Forest train_forest(const Dataset& train, const ForestParams& params, std::uint64_t seed);

double predict_proba(const Forest& f, std::span<const double> x);
std::vector<double> predict_proba(const Forest& f, const Matrix& rows);

/// 1 iff predict_proba(x) >= threshold; threshold must lie in [0,1].
int predict_label(const Forest& f, std::span<const double> x, double threshold = 0.5);

inline constexpr int kForestFormatVersion = 1;

std::string serialize_forest(const Forest& f);
Forest deserialize_forest(const std::string& bytes);

}  // namespace trustnbr
