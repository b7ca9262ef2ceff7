#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustnbr/attribution.hpp"
#include "trustnbr/dataset.hpp"
#include "trustnbr/forest.hpp"
#include "trustnbr/retrieval.hpp"
#include "trustnbr/simuser.hpp"

namespace trustnbr {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything that determines the artifacts of a run.
struct PipelineConfig {
    std::string label_column = "label";
    std::optional<std::string> id_column;
    bool impute_missing = false;
    SplitFractions fractions;
    std::uint64_t split_seed = 7;
    ForestParams forest;
    std::uint64_t train_seed = 11;
    std::size_t background_size = 128;
    std::uint64_t background_seed = 13;
    double threshold = 0.5;
    std::size_t k_max = 100;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; wrong types throw std::invalid_argument.
    static PipelineConfig from_json(const nlohmann::json& j);
};

enum class StepOutcome { Ran, Cached };

/// A run directory holding the stepwise artifacts and their manifest.
///
///   prepare     split.json normalizer.json train.csv test.csv production.csv
///   train       forest.json
///   explain     shap.json background.f64 shap_cases.f64 shap_production.f64
///   casebase    casebase/
///   experiment  grid.csv heatmap.csv curves.csv experiment.json
///
/// manifest.json records the config, the dataset hash and, per step, the hashes of
/// its inputs and outputs. A step refuses to run when an input no longer matches the
/// hash its producer recorded, and is skipped when inputs, parameters and outputs
/// are unchanged.
class ArtifactDir {
public:
    explicit ArtifactDir(std::filesystem::path dir);

    const std::filesystem::path& path() const { return dir_; }

    StepOutcome prepare(const std::filesystem::path& csv, const PipelineConfig& config);
    StepOutcome train();
    StepOutcome explain();
    StepOutcome casebase();
    StepOutcome experiment(std::optional<std::size_t> k_max = std::nullopt);

    nlohmann::json manifest() const;
    PipelineConfig config() const;

    Dataset load_part(const std::string& part) const;  ///< "train", "test" or "production"
    Forest load_forest() const;
    Matrix load_background() const;
    ShapMatrix load_shap(const std::string& which) const;  ///< "cases" or "production"
    CaseBase load_casebase() const;
    AlertSet load_alerts() const;

private:
    using Hashes = std::map<std::string, std::string>;

    StepOutcome run_step(const std::string& name, const std::vector<std::string>& inputs,
                         const std::vector<std::string>& outputs, const nlohmann::json& params,
                         const std::function<void()>& body);
    void save_manifest(const nlohmann::json& m) const;
    std::filesystem::path file(const std::string& rel) const { return dir_ / rel; }

    std::filesystem::path dir_;
};

}  // namespace trustnbr
