#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustnbr/matrix.hpp"

namespace trustnbr {

using InstanceId = std::int64_t;

/// Tabular binary classification data.
///
/// Invariants: features.rows() == labels.size() == ids.size(), labels in {0,1},
/// feature_names.size() == features.cols(), ids unique, no NaN.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::string> feature_names;
    std::vector<InstanceId> ids;

    std::size_t size() const { return labels.size(); }
    std::size_t n_features() const { return features.cols(); }
    std::size_t positives() const;

    /// Throws DataError when an invariant does not hold.
    void validate() const;

    /// Rows in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
};

struct CsvOptions {
    /// Integer identifier column; rows are numbered from 0 when absent.
    std::optional<std::string> id_column;
    /// Replace missing cells with the column mean (numeric) or an all-zero indicator
    /// block (categorical). Missing cells are rejected otherwise.
    bool impute_missing = false;
};

/// Reads an RFC-4180 CSV with a header row. Non-numeric columns are one-hot encoded
/// into "column=value" indicator features, categories in lexicographic order.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const std::string& label_column,
                  const CsvOptions& options = {});

/// Writes id, features..., label with round-trip exact numbers.
std::string to_csv(const Dataset& d, const std::string& label_column = "label");

struct SplitFractions {
    double train = 0.5;
    double test = 0.25;
    double production = 0.25;
};

struct SplitDataset {
    Dataset train;
    Dataset test;
    Dataset production;
    std::uint64_t split_seed = 0;
};

/// Stratified random train/test/production partition, deterministic for a seed.
SplitDataset split_three_way(const Dataset& d, const SplitFractions& fractions, std::uint64_t seed);

/// {"seed":..., "train_ids":[...], "test_ids":[...], "production_ids":[...]}
nlohmann::json split_manifest(const SplitDataset& s);

/// Per-feature z-score parameters fitted on training data.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(std::vector<double> shift, std::vector<double> scale);

    static Normalizer fit(const Dataset& train);

    Dataset apply(const Dataset& d) const;
    Dataset invert(const Dataset& d) const;

    const std::vector<double>& shift() const { return shift_; }
    const std::vector<double>& scale() const { return scale_; }
    std::size_t n_features() const { return shift_.size(); }

    nlohmann::json to_json() const;
    static Normalizer from_json(const nlohmann::json& j);

private:
    std::vector<double> shift_;
    std::vector<double> scale_;
};

inline Normalizer fit_normalizer(const Dataset& train) { return Normalizer::fit(train); }
inline Dataset apply_normalizer(const Normalizer& n, const Dataset& d) { return n.apply(d); }

/// Five-feature synthetic stand-in for the Phoneme benchmark: two overlapping classes
/// (about 30% positive) separated by a nonlinear boundary with label noise.
Dataset make_phoneme_surrogate(std::size_t n_rows, std::uint64_t seed);

}  // namespace trustnbr
