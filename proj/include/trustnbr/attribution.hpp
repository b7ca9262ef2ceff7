#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trustnbr/forest.hpp"

namespace trustnbr {

/// Additive explanation of one prediction: base_value + sum(phi) == model_output.
struct ShapVector {
    std::vector<double> phi;
    double base_value = 0.0;
    double model_output = 0.0;
};

using ShapMatrix = std::vector<ShapVector>;

/// Mean absolute SHAP value per feature.
struct GlobalImportance {
    std::vector<double> weights;
};

/// Exact interventional Shapley values of predict_proba against a background sample.
///
/// For every tree and background row the tree is walked with x and the background
/// row simultaneously; where they split apart both branches are followed and the
/// feature joins the "from x" or "from background" set. A leaf reached with sets
/// (A, B) adds value * (|A|-1)!|B|!/(|A|+|B|)! to each feature of A and subtracts
/// value * |A|!(|B|-1)!/(|A|+|B|)! from each feature of B. Results are averaged
/// over trees and background rows.
ShapVector tree_shap(const Forest& f, std::span<const double> x, const Matrix& background);

/// Enumerates all 2^m coalitions. Independent reference for tree_shap; m <= 15.
ShapVector brute_force_shapley(const Forest& f, std::span<const double> x, const Matrix& background);

inline constexpr std::size_t kMaxBruteForceFeatures = 15;

GlobalImportance global_importance(const ShapMatrix& shap);

/// tree_shap for every row of `rows`, in row order.
ShapMatrix shap_for_dataset(const Forest& f, const Matrix& rows, const Matrix& background);

/// Up to `size` training rows drawn without replacement, kept in original order.
Matrix select_background(const Dataset& train, std::size_t size, std::uint64_t seed);

}  // namespace trustnbr
